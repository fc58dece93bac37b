#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "genda/config.hpp"
#include "genda/errors.hpp"

using namespace genda;
using nlohmann::json;

TEST_CASE("an empty config yields the documented defaults") {
    RunConfig cfg = parse_run_config(json::object());
    CHECK(cfg.seed == 1234);
    CHECK(cfg.pretrain.domain == "shapes");
    CHECK(cfg.pretrain.budget == 200000);
    CHECK(cfg.pretrain.batch == 16);
    CHECK(cfg.pretrain.lr == doctest::Approx(2.5e-3));
    CHECK(cfg.pretrain.w_avg_decay == doctest::Approx(0.995));
    CHECK(cfg.adapt.budget == 200000);
    CHECK(cfg.adapt.batch == 16);
    CHECK(cfg.adapt.lr_adaptor == doctest::Approx(1.25e-4));
    CHECK(cfg.adapt.lr_classifier == doctest::Approx(2.5e-4));
    CHECK(cfg.adapt.beta == doctest::Approx(0.7));
    CHECK(cfg.adapt.aug_max == doctest::Approx(0.6));
    CHECK(cfg.adapt.mode == "genda");
    CHECK(cfg.eval.n_real == 5000);
    CHECK(cfg.eval.n_fake == 5000);
    CHECK(cfg.eval.knn_k == 3);
    CHECK(cfg.warnings.empty());
}

TEST_CASE("a full config round trips every field") {
    json j = {
        {"seed", 99},
        {"pretrain",
         {{"domain", "ring8"},
          {"domain_overrides", "sigma=0.1"},
          {"budget", 4000},
          {"batch", 8},
          {"lr", 1e-3},
          {"w_avg_decay", 0.9},
          {"dims", {{"latent", 8}, {"hidden", 16}, {"out_dim", 2}, {"disc_layers", 2}}}}},
        {"adapt",
         {{"budget", 1000},
          {"batch", 4},
          {"lr_adaptor", 1e-4},
          {"lr_classifier", 2e-4},
          {"beta", 0.9},
          {"aug_max", 0.5},
          {"mode", "freeze_d"}}},
        {"eval", {{"n_real", 64}, {"n_fake", 32}, {"knn_k", 5}}},
    };
    RunConfig cfg = parse_run_config(j);
    CHECK(cfg.seed == 99);
    CHECK(cfg.pretrain.domain == "ring8");
    CHECK(cfg.pretrain.dims.latent == 8);
    CHECK(cfg.pretrain.dims.hidden == 16);
    CHECK(cfg.pretrain.dims.out_dim == 2);
    CHECK(cfg.pretrain.dims.mapping_layers == 3);  // untouched default
    CHECK(cfg.adapt.mode == "freeze_d");
    CHECK(cfg.adapt.beta == doctest::Approx(0.9));
    CHECK(cfg.eval.n_fake == 32);
    CHECK(cfg.warnings.empty());
}

TEST_CASE("unknown keys are rejected with their location") {
    CHECK_THROWS_WITH_AS(parse_run_config({{"sede", 1}}), doctest::Contains("sede"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config({{"adapt", {{"betta", 0.7}}}}),
                         doctest::Contains("betta"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config({{"pretrain", {{"dims", {{"widht", 4}}}}}}),
                         doctest::Contains("widht"), ConfigError);
}

TEST_CASE("type and range violations are configuration errors") {
    CHECK_THROWS_AS(parse_run_config({{"seed", -3}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"seed", "abc"}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"pretrain", {{"budget", "lots"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"pretrain", {{"budget", 0}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"pretrain", {{"budget", 7}, {"batch", 16}}}}),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"pretrain", {{"domain", "cubes"}}}}), ConfigError);
    CHECK_THROWS_AS(
        parse_run_config({{"pretrain", {{"domain", "ring8"}, {"dims", {{"out_dim", 5}}}}}}),
        ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"adapt", {{"mode", "finetune"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"adapt", {{"aug_max", 1.5}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"eval", {{"knn_k", 0}}}}), ConfigError);

    try {
        parse_run_config({{"adapt", {{"beta", 0.0}}}});
        FAIL("beta=0 must not parse");
    } catch (const ConfigError& e) {
        CHECK(exit_code_for(e) == 2);
    }
    CHECK_THROWS_AS(parse_run_config({{"adapt", {{"beta", 1.25}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config({{"adapt", {{"beta", -0.1}}}}), ConfigError);
}

TEST_CASE("a low diversity blend warns instead of failing") {
    RunConfig low = parse_run_config({{"adapt", {{"beta", 0.3}}}});
    REQUIRE(low.warnings.size() == 1);
    CHECK(low.warnings[0].find("0.3") != std::string::npos);
    CHECK(low.adapt.beta == doctest::Approx(0.3));

    CHECK(parse_run_config({{"adapt", {{"beta", 0.5}}}}).warnings.empty());
    CHECK(parse_run_config({{"adapt", {{"beta", 1.0}}}}).warnings.empty());
}

TEST_CASE("seed precedence is flag, then environment, then file") {
    CHECK(resolve_seed(5, 7, 9) == 5);
    CHECK(resolve_seed(std::nullopt, 7, 9) == 7);
    CHECK(resolve_seed(std::nullopt, std::nullopt, 9) == 9);

    setenv("GENDA_SEED", "424242", 1);
    auto env = seed_from_env();
    REQUIRE(env.has_value());
    CHECK(*env == 424242);

    setenv("GENDA_SEED", "12x", 1);
    CHECK_THROWS_AS(seed_from_env(), ConfigError);

    unsetenv("GENDA_SEED");
    CHECK(!seed_from_env().has_value());
}

TEST_CASE("config files load from disk and io failures stay io errors") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "genda_config_tests";
    fs::create_directories(dir);

    fs::path ok = dir / "run.json";
    std::ofstream(ok) << R"({"seed": 7, "adapt": {"beta": 0.8}})";
    RunConfig cfg = load_run_config(ok.string());
    CHECK(cfg.seed == 7);
    CHECK(cfg.adapt.beta == doctest::Approx(0.8));

    fs::path bad = dir / "broken.json";
    std::ofstream(bad) << "{ not json";
    CHECK_THROWS_AS(load_run_config(bad.string()), ConfigError);

    try {
        load_run_config((dir / "absent.json").string());
        FAIL("missing file must not load");
    } catch (const IoError& e) {
        CHECK(exit_code_for(e) == 1);
    }
}

TEST_CASE("the desk preset only shrinks budgets and sample counts") {
    RunConfig cfg = parse_run_config({{"adapt", {{"beta", 0.9}}}});
    apply_desk_preset(cfg);
    CHECK(cfg.pretrain.budget == 20000);
    CHECK(cfg.adapt.budget == 20000);
    CHECK(cfg.eval.n_real == 512);
    CHECK(cfg.eval.n_fake == 512);
    CHECK(cfg.adapt.beta == doctest::Approx(0.9));
    CHECK(cfg.pretrain.batch == 16);
}

TEST_CASE("config_echo captures every field and survives a reparse") {
    nlohmann::json raw = {
        {"seed", 99},
        {"pretrain",
         {{"domain", "ring8"}, {"budget", 4096}, {"batch", 32}, {"lr", 0.002},
          {"domain_overrides", "modes=4"}}},
        {"adapt",
         {{"mode", "freeze_d"}, {"beta", 0.55}, {"budget", 2048}, {"lr_adaptor", 3e-4}}},
        {"eval", {{"n_real", 777}, {"knn_k", 5}}},
    };
    RunConfig a = parse_run_config(raw);
    nlohmann::json echo = config_echo(a);

    CHECK(echo["seed"] == 99);
    CHECK(echo["pretrain"]["domain"] == "ring8");
    CHECK(echo["pretrain"]["domain_overrides"] == "modes=4");
    CHECK(echo["adapt"]["mode"] == "freeze_d");
    CHECK(echo["eval"]["n_real"] == 777);
    // defaults that the raw config never mentioned are spelled out too
    CHECK(echo["eval"]["n_fake"] == 5000);
    CHECK(echo["adapt"]["aug_max"] == doctest::Approx(0.6));
    CHECK(echo["pretrain"]["dims"]["latent"] == a.pretrain.dims.latent);

    RunConfig b = parse_run_config(echo);
    CHECK(config_echo(b) == echo);
}
