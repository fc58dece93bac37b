#include "genda/config.hpp"

#include <cstdlib>
#include <fstream>

#include "genda/domains.hpp"
#include "genda/errors.hpp"

namespace genda {

namespace {

using nlohmann::json;

void expect_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
}

void expect_keys(const json& j, const std::string& where,
                 std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) {
                ok = true;
                break;
            }
        if (!ok) {
            std::string list;
            for (const char* a : allowed) {
                if (!list.empty()) list += ", ";
                list += a;
            }
            throw ConfigError("unknown key '" + key + "' in " + where + " (allowed: " + list +
                              ")");
        }
    }
}

long long get_int(const json& j, const char* key, const std::string& where, long long fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
    return v.get<long long>();
}

double get_num(const json& j, const char* key, const std::string& where, double fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
    return v.get<double>();
}

std::string get_str(const json& j, const char* key, const std::string& where,
                    const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_string()) throw ConfigError(where + "." + key + " must be a string");
    return v.get<std::string>();
}

void require_positive(long long v, const std::string& what) {
    if (v <= 0) throw ConfigError(what + " must be positive, got " + std::to_string(v));
}

Dims parse_dims(const json& j, const std::string& where) {
    expect_object(j, where);
    expect_keys(j, where,
                {"latent", "mapping_layers", "hidden", "style_layers", "image_res", "out_dim",
                 "disc_features", "disc_layers"});
    Dims d;
    d.latent = int(get_int(j, "latent", where, d.latent));
    d.mapping_layers = int(get_int(j, "mapping_layers", where, d.mapping_layers));
    d.hidden = int(get_int(j, "hidden", where, d.hidden));
    d.style_layers = int(get_int(j, "style_layers", where, d.style_layers));
    d.image_res = int(get_int(j, "image_res", where, d.image_res));
    d.out_dim = int(get_int(j, "out_dim", where, d.out_dim));
    d.disc_features = int(get_int(j, "disc_features", where, d.disc_features));
    d.disc_layers = int(get_int(j, "disc_layers", where, d.disc_layers));
    for (auto [v, name] : {std::pair{d.latent, "latent"}, {d.mapping_layers, "mapping_layers"},
                           {d.hidden, "hidden"}, {d.style_layers, "style_layers"},
                           {d.disc_features, "disc_features"}, {d.disc_layers, "disc_layers"}})
        require_positive(v, where + "." + std::string(name));
    return d;
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
    expect_object(j, "config");
    expect_keys(j, "config", {"seed", "pretrain", "adapt", "eval"});
    RunConfig cfg;

    if (j.contains("seed")) {
        const json& s = j.at("seed");
        if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<long long>() < 0))
            throw ConfigError("config.seed must be a non-negative integer");
        cfg.seed = s.get<uint64_t>();
    }

    if (j.contains("pretrain")) {
        const json& p = j.at("pretrain");
        expect_object(p, "pretrain");
        expect_keys(p, "pretrain",
                    {"domain", "domain_overrides", "budget", "batch", "lr", "w_avg_decay",
                     "dims"});
        auto& c = cfg.pretrain;
        c.domain = get_str(p, "domain", "pretrain", c.domain);
        c.domain_overrides = get_str(p, "domain_overrides", "pretrain", c.domain_overrides);
        c.budget = get_int(p, "budget", "pretrain", c.budget);
        c.batch = int(get_int(p, "batch", "pretrain", c.batch));
        c.lr = get_num(p, "lr", "pretrain", c.lr);
        c.w_avg_decay = get_num(p, "w_avg_decay", "pretrain", c.w_avg_decay);
        if (p.contains("dims")) c.dims = parse_dims(p.at("dims"), "pretrain.dims");

        require_positive(c.budget, "pretrain.budget");
        require_positive(c.batch, "pretrain.batch");
        if (c.budget < c.batch)
            throw ConfigError("pretrain.budget is below one batch (" +
                              std::to_string(c.batch) + " samples)");
        if (c.lr < 0) throw ConfigError("pretrain.lr must be non-negative");
        if (c.w_avg_decay < 0 || c.w_avg_decay >= 1)
            throw ConfigError("pretrain.w_avg_decay must lie in [0,1)");

        // fail here, not after minutes of training
        Domain dom = domain_by_name(c.domain);
        apply_overrides(dom, c.domain_overrides);
        if (c.dims.out_dim != 0 && c.dims.out_dim != dom.output_dim())
            throw ConfigError("pretrain.dims.out_dim " + std::to_string(c.dims.out_dim) +
                              " contradicts domain output size " +
                              std::to_string(dom.output_dim()));
    }

    if (j.contains("adapt")) {
        const json& a = j.at("adapt");
        expect_object(a, "adapt");
        expect_keys(a, "adapt",
                    {"budget", "batch", "lr_adaptor", "lr_classifier", "beta", "aug_max",
                     "mode"});
        auto& c = cfg.adapt;
        c.budget = get_int(a, "budget", "adapt", c.budget);
        c.batch = int(get_int(a, "batch", "adapt", c.batch));
        c.lr_adaptor = get_num(a, "lr_adaptor", "adapt", c.lr_adaptor);
        c.lr_classifier = get_num(a, "lr_classifier", "adapt", c.lr_classifier);
        c.beta = get_num(a, "beta", "adapt", c.beta);
        c.aug_max = get_num(a, "aug_max", "adapt", c.aug_max);
        c.mode = get_str(a, "mode", "adapt", c.mode);

        require_positive(c.budget, "adapt.budget");
        require_positive(c.batch, "adapt.batch");
        if (c.budget < c.batch)
            throw ConfigError("adapt.budget is below one batch (" + std::to_string(c.batch) +
                              " samples)");
        if (c.lr_adaptor < 0 || c.lr_classifier < 0)
            throw ConfigError("adapt learning rates must be non-negative");
        if (!(c.beta > 0 && c.beta <= 1))
            throw ConfigError("adapt.beta must lie in (0,1], got " + std::to_string(c.beta));
        if (c.beta < 0.5)
            cfg.warnings.push_back("adapt.beta=" + std::to_string(c.beta) +
                                   " pulls samples hard toward the average latent; expect low "
                                   "diversity below 0.5");
        if (c.aug_max < 0 || c.aug_max > 1)
            throw ConfigError("adapt.aug_max must lie in [0,1]");
        if (c.mode != "genda" && c.mode != "full_finetune" && c.mode != "freeze_d")
            throw ConfigError("adapt.mode must be genda, full_finetune or freeze_d, got '" +
                              c.mode + "'");
    }

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        expect_object(e, "eval");
        expect_keys(e, "eval", {"n_real", "n_fake", "knn_k"});
        auto& c = cfg.eval;
        c.n_real = int(get_int(e, "n_real", "eval", c.n_real));
        c.n_fake = int(get_int(e, "n_fake", "eval", c.n_fake));
        c.knn_k = int(get_int(e, "knn_k", "eval", c.knn_k));
        require_positive(c.n_real, "eval.n_real");
        require_positive(c.n_fake, "eval.n_fake");
        require_positive(c.knn_k, "eval.knn_k");
    }

    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + " is not valid JSON");
    return parse_run_config(j);
}

json config_echo(const RunConfig& cfg) {
    const Dims& d = cfg.pretrain.dims;
    return {
        {"seed", cfg.seed},
        {"pretrain",
         {{"domain", cfg.pretrain.domain},
          {"domain_overrides", cfg.pretrain.domain_overrides},
          {"budget", cfg.pretrain.budget},
          {"batch", cfg.pretrain.batch},
          {"lr", cfg.pretrain.lr},
          {"w_avg_decay", cfg.pretrain.w_avg_decay},
          {"dims",
           {{"latent", d.latent},
            {"mapping_layers", d.mapping_layers},
            {"hidden", d.hidden},
            {"style_layers", d.style_layers},
            {"image_res", d.image_res},
            {"out_dim", d.out_dim},
            {"disc_features", d.disc_features},
            {"disc_layers", d.disc_layers}}}}},
        {"adapt",
         {{"budget", cfg.adapt.budget},
          {"batch", cfg.adapt.batch},
          {"lr_adaptor", cfg.adapt.lr_adaptor},
          {"lr_classifier", cfg.adapt.lr_classifier},
          {"beta", cfg.adapt.beta},
          {"aug_max", cfg.adapt.aug_max},
          {"mode", cfg.adapt.mode}}},
        {"eval",
         {{"n_real", cfg.eval.n_real},
          {"n_fake", cfg.eval.n_fake},
          {"knn_k", cfg.eval.knn_k}}},
    };
}

void apply_desk_preset(RunConfig& cfg) {
    cfg.pretrain.budget = 20000;
    cfg.adapt.budget = 20000;
    cfg.eval.n_real = 512;
    cfg.eval.n_fake = 512;
}

std::optional<uint64_t> seed_from_env() {
    const char* raw = std::getenv("GENDA_SEED");
    if (!raw || !*raw) return std::nullopt;
    char* end = nullptr;
    unsigned long long v = std::strtoull(raw, &end, 10);
    if (end == raw || *end != '\0')
        throw ConfigError(std::string("GENDA_SEED must be an unsigned integer, got '") + raw +
                          "'");
    return v;
}

uint64_t resolve_seed(std::optional<uint64_t> flag, std::optional<uint64_t> env,
                      uint64_t config_seed) {
    if (flag) return *flag;
    if (env) return *env;
    return config_seed;
}

}  // namespace genda
