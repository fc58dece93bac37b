#pragma once

// Run configuration: one JSON file with pretrain / adapt / eval sections and
// a seed. Parsing is strict: unknown keys, wrong types, and out-of-range
// values are configuration errors, caught before any work starts. Soft
// issues (a diversity blend low enough to risk mode collapse) land in
// `warnings` instead of failing the run.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "genda/nets.hpp"
#include "json.hpp"

namespace genda {

struct PretrainConfig {
    std::string domain = "shapes";
    std::string domain_overrides;  // "key=value,key=value" forwarded to the domain
    long long budget = 200000;     // total real samples consumed
    int batch = 16;
    double lr = 2.5e-3;
    double w_avg_decay = 0.995;
    Dims dims;                     // out_dim always follows the domain
};

struct AdaptConfig {
    long long budget = 200000;
    int batch = 16;
    double lr_adaptor = 1.25e-4;
    double lr_classifier = 2.5e-4;
    double beta = 0.7;       // diversity blend; (0,1], 1 disables truncation
    double aug_max = 0.6;    // augmentation probability after the ramp
    std::string mode = "genda";  // genda | full_finetune | freeze_d
};

struct EvalConfig {
    int n_real = 5000;
    int n_fake = 5000;
    int knn_k = 3;
};

struct RunConfig {
    uint64_t seed = 1234;
    PretrainConfig pretrain;
    AdaptConfig adapt;
    EvalConfig eval;
    std::vector<std::string> warnings;  // filled by the parser, never fatal
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// full JSON image of a config; parse_run_config(config_echo(c)) reproduces c.
// Used to stamp configs into checkpoints and run reports.
nlohmann::json config_echo(const RunConfig& cfg);

// quick-turnaround budgets for local runs; everything else untouched
void apply_desk_preset(RunConfig& cfg);

// GENDA_SEED from the environment; must be a complete unsigned integer
std::optional<uint64_t> seed_from_env();

// command line beats environment beats config file
uint64_t resolve_seed(std::optional<uint64_t> flag, std::optional<uint64_t> env,
                      uint64_t config_seed);

}  // namespace genda
