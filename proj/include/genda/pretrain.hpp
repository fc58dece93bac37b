#pragma once

// Source-domain GAN training with the non-saturating objective:
//
//   L_D = -E[log s(D(x))] - E[log(1 - s(D(G(z))))]
//   L_G = -E[log s(D(G(z)))]
//
// Each iteration takes one discriminator step on a fresh real batch, then
// one generator step on a fresh latent batch, and folds the batch-mean
// mapped latent into w_avg with an exponential decay. The budget counts
// real samples, so iterations = budget / batch. A loss above 100 or any
// non-finite value aborts with the divergence exit code; silent garbage
// checkpoints are worse than a dead run.

#include <cstdint>
#include <functional>
#include <vector>

#include "genda/config.hpp"
#include "genda/domains.hpp"
#include "genda/nets.hpp"

namespace genda {

struct PretrainStep {
    long long iter = 0;          // 0-based
    long long samples_seen = 0;  // real samples consumed so far
    double loss_d = 0;
    double loss_g = 0;
    std::vector<float> w_mean;   // batch mean mapped latent of the generator step
};

using PretrainCallback = std::function<void(const PretrainStep&, Model&)>;

struct PretrainResult {
    Model model;
    Domain domain;
    long long iters = 0;
    double loss_d = 0;
    double loss_g = 0;
};

PretrainResult pretrain(const PretrainConfig& cfg, uint64_t seed,
                        const PretrainCallback& callback = {});

}  // namespace genda
