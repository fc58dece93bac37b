#pragma once

// Command dispatch for the genda tool. Kept as a library function so tests
// can drive full commands in-process and capture their streams; main() is a
// two-line wrapper.
//
// Commands: pretrain, adapt, eval, ablate, analyze pca|latents|interp,
// render-domain. Exit codes: 0 ok, 1 I/O, 2 config, 3 divergence, 4 shape,
// 5 fingerprint. Seed precedence everywhere: --seed flag, then GENDA_SEED,
// then the config file (or checkpoint metadata for commands without one).

#include <ostream>
#include <string>
#include <vector>

namespace genda {

// args are what main() receives after the program name
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace genda
