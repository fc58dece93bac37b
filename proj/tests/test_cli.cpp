// Drives full commands in-process through run_cli and checks exit codes,
// stream output, and the files left behind. Training budgets are tiny; the
// point here is plumbing, not model quality.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "genda/checkpoint.hpp"
#include "genda/cli.hpp"
#include "genda/nets.hpp"
#include "json.hpp"

using namespace genda;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
    int code = 0;
    std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    CliRun r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch() {
    static fs::path dir = [] {
        unsetenv("GENDA_SEED");  // keep an inherited seed from skewing anything
        fs::path d = fs::temp_directory_path() / "genda_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string path_in(const std::string& name) { return (scratch() / name).string(); }

std::string write_config(const std::string& name, const json& j) {
    std::string p = path_in(name);
    std::ofstream(p) << j.dump();
    return p;
}

json small_cfg() {
    return {
        {"seed", 5},
        {"pretrain",
         {{"domain", "shapes"},
          {"domain_overrides", "res=8"},
          {"budget", 2400},
          {"batch", 16}}},
        {"adapt", {{"budget", 800}, {"batch", 16}}},
        {"eval", {{"n_real", 64}, {"n_fake", 64}}},
    };
}

// one pretrained 8x8 model shared by every case below
const std::string& base_model() {
    static std::string path = [] {
        std::string cfg = write_config("base_cfg.json", small_cfg());
        std::string out = path_in("base.gdac");
        CliRun r = cli({"pretrain", "--config", cfg, "--out", out});
        if (r.code != 0) throw std::runtime_error("fixture pretrain failed: " + r.err);
        return out;
    }();
    return path;
}

json jload(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(bool(f));
    return json::parse(f);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(bool(f));
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("help is exit 0, unknown commands and missing flags are exit 2") {
    CliRun help = cli({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("Usage") != std::string::npos);
    CHECK(help.out.find("pretrain") != std::string::npos);

    CliRun sub_help = cli({"pretrain", "--help"});
    CHECK(sub_help.code == 0);
    CHECK(sub_help.out.find("--config") != std::string::npos);

    CliRun bogus = cli({"frobnicate"});
    CHECK(bogus.code == 2);
    CHECK(!bogus.err.empty());

    CliRun incomplete = cli({"pretrain"});
    CHECK(incomplete.code == 2);
    CHECK(incomplete.err.find("--config") != std::string::npos);
}

TEST_CASE("config problems map to the io and config exit codes") {
    CliRun missing = cli({"pretrain", "--config", path_in("nope.json"), "--out", path_in("x.gdac")});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("nope.json") != std::string::npos);

    std::string bad = write_config("bad_beta.json", {{"adapt", {{"beta", 1.5}}}});
    CliRun r = cli({"pretrain", "--config", bad, "--out", path_in("x.gdac")});
    CHECK(r.code == 2);
    CHECK(r.err.find("adapt.beta") != std::string::npos);
    CHECK(!fs::exists(path_in("x.gdac")));
}

TEST_CASE("pretraining writes a loadable snapshot whose log matches the file") {
    LoadedModel lm = load_model(base_model());
    CHECK(lm.model.dims.output_dim() == 3 * 8 * 8);
    CHECK(lm.meta.at("seed") == 5);
    CHECK(lm.meta.at("domain") == "shapes");
    CHECK(lm.meta.at("config").at("pretrain").at("budget") == 2400);
    CHECK(lm.meta.at("config").at("adapt").at("beta") == doctest::Approx(0.7));

    json log = jload(base_model() + ".log.json");
    CHECK(log.at("iters") == 2400 / 16);
    CHECK(log.at("file_hash") == hash_hex(file_hash(base_model())));
    CHECK(log.at("params_fingerprint") == hash_hex(params_fingerprint(lm.model)));
    CHECK(log.at("curve").size() > 0);
    CHECK(log.at("seed") == 5);
}

TEST_CASE("a zero-budget adaptation leaves the identity adaptor in the artifacts") {
    std::string cfg = write_config("cfg.json", small_cfg());
    std::string out = path_in("smoke.gdac");
    CliRun r = cli({"adapt", "--base", base_model(), "--config", cfg, "--ref",
                    "glasses=true,seed=3", "--out", out, "--budget", "0"});
    REQUIRE(r.code == 0);

    Checkpoint ck = load_checkpoint(out);
    CHECK(ck.meta.at("kind") == "adapted");
    CHECK(ck.meta.at("mode") == "genda");
    CHECK(ck.meta.at("beta") == doctest::Approx(0.7));
    REQUIRE(ck.meta.at("references").size() == 1);
    CHECK(ck.meta["references"][0].at("source") == "spec");
    CHECK(ck.meta["references"][0].at("seed") == 3);
    CHECK(ck.meta["references"][0].at("params").at("glasses") == true);
    CHECK(ck.meta["references"][0].contains("hash"));

    const Tensor* a = ck.find("adaptor.a");
    const Tensor* b = ck.find("adaptor.b");
    REQUIRE(a);
    REQUIRE(b);
    for (float v : a->data) CHECK(v == 1.0f);
    for (float v : b->data) CHECK(v == 0.0f);

    // nothing else moved either: the stored output projection equals the base
    LoadedModel lm = load_model(base_model());
    const Tensor* w = ck.find("syn.out.w");
    REQUIRE(w);
    CHECK(w->data == lm.model.synthesis.output_projection.w.data);

    json log = jload(out + ".log.json");
    CHECK(log.at("iters") == 0);
    CHECK(log.at("multi_reference") == false);
    CHECK(log.at("n_references") == 1);
}

TEST_CASE("multiple references and explicit modes are recorded") {
    std::string cfg = write_config("cfg.json", small_cfg());
    std::string out = path_in("multi.gdac");
    CliRun r = cli({"adapt", "--base", base_model(), "--config", cfg, "--ref",
                    "glasses=true,seed=3", "--ref", "glasses=true,seed=4", "--out", out,
                    "--budget", "0"});
    REQUIRE(r.code == 0);
    json log = jload(out + ".log.json");
    CHECK(log.at("multi_reference") == true);
    CHECK(log.at("n_references") == 2);
    CHECK(load_checkpoint(out).meta.at("references").size() == 2);

    std::string fz = path_in("fz.gdac");
    CliRun r2 = cli({"adapt", "--base", base_model(), "--config", cfg, "--ref",
                     "sketch=true,seed=2", "--out", fz, "--budget", "0", "--mode", "freeze_d"});
    REQUIRE(r2.code == 0);
    Checkpoint ck = load_checkpoint(fz);
    CHECK(ck.meta.at("mode") == "freeze_d");
    CHECK(ck.meta.at("beta") == doctest::Approx(1.0));  // baselines sample untruncated

    CliRun r3 = cli({"adapt", "--base", base_model(), "--config", cfg, "--ref",
                     "sketch=true", "--out", path_in("m.gdac"), "--budget", "0", "--mode",
                     "upside_down"});
    CHECK(r3.code == 2);
}

TEST_CASE("a reference with the wrong resolution is a shape error, exit 4") {
    // rendered at the default 16x16, the base generator is 8x8
    std::string ref = path_in("big_ref.gdac");
    REQUIRE(cli({"render-domain", "--domain", "shapes", "--out", ref, "--seed", "1"}).code == 0);
    std::string cfg = write_config("cfg.json", small_cfg());
    CliRun r = cli({"adapt", "--base", base_model(), "--config", cfg, "--ref", ref, "--out",
                    path_in("x.gdac")});
    CHECK(r.code == 4);
    CHECK(r.err.find("reference") != std::string::npos);
}

TEST_CASE("beta overrides are validated and low values warn") {
    std::string cfg = write_config("cfg.json", small_cfg());
    CliRun bad = cli({"adapt", "--base", base_model(), "--config", cfg, "--ref", "glasses=true",
                      "--out", path_in("x.gdac"), "--budget", "0", "--beta", "1.3"});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("adapt.beta") != std::string::npos);

    std::string out = path_in("lowbeta.gdac");
    CliRun low = cli({"adapt", "--base", base_model(), "--config", cfg, "--ref", "glasses=true",
                      "--out", out, "--budget", "0", "--beta", "0.3"});
    REQUIRE(low.code == 0);
    CHECK(low.err.find("diversity") != std::string::npos);
    CHECK(load_checkpoint(out).meta.at("beta") == doctest::Approx(0.3));
}

TEST_CASE("a short adaptation moves the adaptor and reruns bit for bit") {
    std::string cfg = write_config("cfg.json", small_cfg());
    std::string o1 = path_in("run1.gdac"), o2 = path_in("run2.gdac");
    REQUIRE(cli({"adapt", "--base", base_model(), "--config", cfg, "--ref",
                 "glasses=true,seed=3", "--out", o1}).code == 0);
    REQUIRE(cli({"adapt", "--base", base_model(), "--config", cfg, "--ref",
                 "glasses=true,seed=3", "--out", o2}).code == 0);
    CHECK(slurp(o1) == slurp(o2));

    Checkpoint ck = load_checkpoint(o1);
    const Tensor* a = ck.find("adaptor.a");
    REQUIRE(a);
    bool moved = false;
    for (float v : a->data) moved = moved || v != 1.0f;
    CHECK(moved);
}

TEST_CASE("evaluation reports carry the fixed fields and are deterministic") {
    std::string r1 = path_in("rep1.json"), r2 = path_in("rep2.json");
    CliRun a = cli({"eval", "--base", base_model(), "--out", r1, "--n-real", "64", "--n-fake",
                    "64"});
    REQUIRE(a.code == 0);
    CHECK(a.out.find("frechet") != std::string::npos);
    REQUIRE(cli({"eval", "--base", base_model(), "--out", r2, "--n-real", "64", "--n-fake",
                 "64"}).code == 0);
    CHECK(slurp(r1) == slurp(r2));

    json rep = jload(r1);
    for (const char* key : {"frechet", "precision", "recall", "k", "n_real", "n_fake",
                            "attribute_stats", "embedder_fingerprint", "beta", "domain", "seed",
                            "warnings"})
        CHECK(rep.contains(key));
    CHECK(rep["k"] == 3);
    CHECK(rep["n_real"] == 64);
    CHECK(rep["beta"] == doctest::Approx(1.0));  // no artifacts applied
    CHECK(rep["domain"] == "shapes");            // training domain from the checkpoint
    CHECK(rep["seed"] == 5);
    CHECK(rep["frechet"].get<double>() >= 0.0);
    CHECK(rep["attribute_stats"]["n"] == 64);
}

TEST_CASE("evaluating artifacts picks up their sampling beta") {
    std::string cfg = write_config("cfg.json", small_cfg());
    std::string art = path_in("eval_art.gdac");
    REQUIRE(cli({"adapt", "--base", base_model(), "--config", cfg, "--ref",
                 "glasses=true,seed=3", "--out", art, "--budget", "0"}).code == 0);
    std::string rep_path = path_in("rep_art.json");
    REQUIRE(cli({"eval", "--base", base_model(), "--artifacts", art, "--out", rep_path,
                 "--n-real", "48", "--n-fake", "48"}).code == 0);
    CHECK(jload(rep_path)["beta"] == doctest::Approx(0.7));
}

TEST_CASE("tiny sample sets trigger the under-determined warning") {
    std::string rep_path = path_in("rep_tiny.json");
    REQUIRE(cli({"eval", "--base", base_model(), "--out", rep_path, "--n-real", "8", "--n-fake",
                 "8", "--k", "2"}).code == 0);
    json rep = jload(rep_path);
    REQUIRE(rep["warnings"].size() >= 1);
    CHECK(rep["warnings"][0].get<std::string>().find("under-determined") != std::string::npos);
}

TEST_CASE("reports from different embedders refuse to be compared") {
    std::string r1 = path_in("cmp1.json"), r2 = path_in("cmp2.json");
    REQUIRE(cli({"eval", "--base", base_model(), "--out", r1, "--n-real", "48", "--n-fake",
                 "48"}).code == 0);
    CliRun bad = cli({"eval", "--base", base_model(), "--out", r2, "--n-real", "48", "--n-fake",
                      "48", "--embedder-seed", "42", "--compare", r1});
    CHECK(bad.code == 5);
    CHECK(bad.err.find("embedder") != std::string::npos);

    CliRun ok = cli({"eval", "--base", base_model(), "--out", r2, "--n-real", "48", "--n-fake",
                     "48", "--compare", r1});
    REQUIRE(ok.code == 0);
    CHECK(jload(r2)["compare"]["frechet_delta"] == doctest::Approx(0.0));
}

TEST_CASE("artifacts from a different base are refused, exit 5") {
    std::string cfg = write_config("other_cfg.json", small_cfg());
    std::string other = path_in("other_base.gdac");
    REQUIRE(cli({"pretrain", "--config", cfg, "--out", other, "--seed", "31", "--budget",
                 "0"}).code == 0);
    std::string art = path_in("bound_art.gdac");
    REQUIRE(cli({"adapt", "--base", base_model(), "--config", cfg, "--ref", "glasses=true",
                 "--out", art, "--budget", "0"}).code == 0);
    CliRun r = cli({"eval", "--base", other, "--artifacts", art, "--out", path_in("x.json"),
                    "--n-real", "16", "--n-fake", "16"});
    CHECK(r.code == 5);
}

TEST_CASE("seed precedence: flag beats environment beats config") {
    std::string cfg = write_config("seed_cfg.json", small_cfg());
    auto run = [&](const std::string& out, const std::vector<std::string>& extra) {
        std::vector<std::string> args = {"pretrain", "--config", cfg, "--out", path_in(out),
                                         "--budget", "0"};
        args.insert(args.end(), extra.begin(), extra.end());
        REQUIRE(cli(args).code == 0);
        return slurp(path_in(out));
    };
    unsetenv("GENDA_SEED");
    std::string from_config = run("s_cfg.gdac", {});

    setenv("GENDA_SEED", "777", 1);
    std::string from_env = run("s_env.gdac", {});
    std::string from_flag = run("s_flag.gdac", {"--seed", "5"});
    unsetenv("GENDA_SEED");

    CHECK(from_env != from_config);
    CHECK(from_flag == from_config);
}

TEST_CASE("rendered snapshots round-trip as adaptation references") {
    std::string ref = path_in("small_ref.gdac");
    REQUIRE(cli({"render-domain", "--domain", "shapes,res=8,glasses=true", "--out", ref,
                 "--seed", "7"}).code == 0);
    Checkpoint ck = load_checkpoint(ref);
    CHECK(ck.meta.at("kind") == "rendered");
    CHECK(ck.meta.at("params").at("glasses") == true);
    const Tensor* img = ck.find("image");
    REQUIRE(img);
    CHECK(img->shape == Shape{3 * 8 * 8});

    std::string again = path_in("small_ref2.gdac");
    REQUIRE(cli({"render-domain", "--domain", "shapes,res=8,glasses=true", "--out", again,
                 "--seed", "7"}).code == 0);
    CHECK(slurp(ref) == slurp(again));

    std::string cfg = write_config("cfg.json", small_cfg());
    std::string out = path_in("fileref.gdac");
    REQUIRE(cli({"adapt", "--base", base_model(), "--config", cfg, "--ref", ref, "--out", out,
                 "--budget", "0"}).code == 0);
    json refs = load_checkpoint(out).meta.at("references");
    CHECK(refs[0].at("source") == "file");
    CHECK(refs[0].at("path") == ref);
    CHECK(refs[0].contains("hash"));
}

TEST_CASE("point domains render as rows, not images") {
    std::string one = path_in("ring1.gdac");
    REQUIRE(cli({"render-domain", "--domain", "ring8", "--out", one}).code == 0);
    const Tensor* img = load_checkpoint(one).find("image");
    REQUIRE(img);
    CHECK(img->shape == Shape{2});

    std::string many = path_in("ring3.gdac");
    REQUIRE(cli({"render-domain", "--domain", "ring8", "--out", many, "--n", "3"}).code == 0);
    const Tensor* rows = load_checkpoint(many).find("images");
    REQUIRE(rows);
    CHECK(rows->shape == Shape{3, 2});
}

TEST_CASE("analyze pca projects adaptor vectors and writes all three files") {
    std::string cfg = write_config("cfg.json", small_cfg());
    std::string a1 = path_in("pca_a.gdac"), a2 = path_in("pca_b.gdac");
    REQUIRE(cli({"adapt", "--base", base_model(), "--config", cfg, "--ref",
                 "glasses=true,seed=3", "--out", a1}).code == 0);
    REQUIRE(cli({"adapt", "--base", base_model(), "--config", cfg, "--ref", "sketch=true,seed=4",
                 "--out", a2, "--seed", "11"}).code == 0);

    std::string stem = path_in("pca_plot");
    CliRun r = cli({"analyze", "pca", "--artifacts", a1, "--artifacts", a2, "--label", "glasses",
                    "--label", "sketch", "--out", stem});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(stem + ".csv"));
    CHECK(fs::exists(stem + ".svg"));
    json meta = jload(stem + ".json");
    CHECK(meta["n"] == 2);
    CHECK(meta["labels"] == json::array({"glasses", "sketch"}));
    REQUIRE(meta["explained_variance_ratio"].size() == 2);  // padded second axis
    CHECK(meta["explained_variance_ratio"][1] == doctest::Approx(0.0));

    std::string csv = slurp(stem + ".csv");
    CHECK(csv.rfind("label,pc1,pc2\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

    CHECK(cli({"analyze", "pca", "--artifacts", a1, "--out", stem}).code == 2);
}

TEST_CASE("analyze latents projects codes from the base and each artifact") {
    std::string cfg = write_config("cfg.json", small_cfg());
    std::string art = path_in("lat_art.gdac");
    REQUIRE(cli({"adapt", "--base", base_model(), "--config", cfg, "--ref",
                 "glasses=true,seed=3", "--out", art}).code == 0);
    std::string stem = path_in("lat_plot");
    CliRun r = cli({"analyze", "latents", "--base", base_model(), "--artifacts", art, "--codes",
                    "40", "--out", stem});
    REQUIRE(r.code == 0);
    json meta = jload(stem + ".json");
    CHECK(meta["n"] == 80);  // base + one artifact, 40 codes each
    CHECK(meta["sources"] == json::array({"source", "lat_art"}));
    std::string csv = slurp(stem + ".csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 81);
    CHECK(csv.find("source,") != std::string::npos);
    CHECK(csv.find("lat_art,") != std::string::npos);
}

TEST_CASE("analyze interp writes a frames snapshot through the adapted model") {
    std::string cfg = write_config("cfg.json", small_cfg());
    std::string art = path_in("interp_art.gdac");
    REQUIRE(cli({"adapt", "--base", base_model(), "--config", cfg, "--ref",
                 "glasses=true,seed=3", "--out", art, "--budget", "0"}).code == 0);
    std::string out = path_in("frames.gdac");
    CliRun r = cli({"analyze", "interp", "--base", base_model(), "--artifacts", art, "--steps",
                    "4", "--out", out});
    REQUIRE(r.code == 0);
    Checkpoint ck = load_checkpoint(out);
    CHECK(ck.meta.at("kind") == "frames");
    CHECK(ck.meta.at("steps") == 4);
    CHECK(ck.meta.at("beta") == doctest::Approx(0.7));  // inherited from the artifacts
    const Tensor* frames = ck.find("frames");
    REQUIRE(frames);
    CHECK(frames->shape == Shape{4, 3 * 8 * 8});

    CHECK(cli({"analyze", "interp", "--base", base_model(), "--steps", "1", "--out",
               path_in("x.gdac")}).code == 2);
}

TEST_CASE("the ablation grid writes one report per cell and a summary") {
    json cfg_json = small_cfg();
    cfg_json["pretrain"]["budget"] = 1600;
    cfg_json["adapt"]["budget"] = 320;
    cfg_json["eval"] = {{"n_real", 48}, {"n_fake", 48}};
    std::string cfg = write_config("ablate_cfg.json", cfg_json);
    std::string dir = path_in("grid");

    CliRun r = cli({"ablate", "--config", cfg, "--out-dir", dir, "--ref", "glasses=true,seed=3"});
    REQUIRE(r.code == 0);

    std::string csv = slurp(dir + "/summary.csv");
    CHECK(csv.rfind("grid,row,mode,beta,status", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 12);  // header + 11 cells
    for (const char* row : {"components,baseline,freeze_d", "components,+AA,", "components,+AA+AC,genda",
                            "components,+AA+AC+DC,genda", "beta,beta=0.5", "beta,beta=1.0",
                            "arch,light", "arch,heavy_adaptor", "arch,heavy_classifier"})
        CHECK(csv.find(row) != std::string::npos);

    json cell = jload(dir + "/components__baseline.json");
    CHECK(cell["grid"] == "components");
    CHECK(cell["row"] == "baseline");
    CHECK(cell.contains("frechet"));
    CHECK(cell.contains("recall"));
    json dc = jload(dir + "/components__aa_ac_dc.json");
    CHECK(dc["beta"] == doctest::Approx(0.7));
    CHECK(jload(dir + "/beta__beta_0_9.json")["beta"] == doctest::Approx(0.9));
}

TEST_CASE("ablation cells fail independently and the exit code reports total loss") {
    // a 16x16 reference cannot adapt an 8x8 base: every cell fails the same way
    std::string ref = path_in("ablate_bad_ref.gdac");
    REQUIRE(cli({"render-domain", "--domain", "shapes", "--out", ref}).code == 0);
    json cfg_json = small_cfg();
    cfg_json["pretrain"]["budget"] = 320;
    cfg_json["eval"] = {{"n_real", 16}, {"n_fake", 16}};
    std::string cfg = write_config("ablate_fail_cfg.json", cfg_json);
    std::string dir = path_in("grid_fail");

    CliRun r = cli({"ablate", "--config", cfg, "--out-dir", dir, "--ref", ref});
    CHECK(r.code == 4);
    CHECK(r.out.find("0/11") != std::string::npos);
    std::string csv = slurp(dir + "/summary.csv");
    CHECK(csv.find(",error,") != std::string::npos);
    CHECK(csv.find("reference") != std::string::npos);
    json cell = jload(dir + "/arch__heavy_adaptor.json");
    CHECK(cell["exit_code"] == 4);
    CHECK(cell["error"].get<std::string>().find("reference") != std::string::npos);
}
