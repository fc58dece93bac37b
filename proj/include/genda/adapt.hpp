#pragma once

// One-shot (or few-shot) domain adaptation of a pretrained generator.
//
// The main mode keeps the whole backbone frozen and tunes three small
// pieces: a per-channel affine adaptor on the mapped latent, the output
// projection, and an attribute classifier head on the frozen critic
// features. Each iteration first fits the classifier to separate the
// reference from current samples, then moves the generator pieces to
// raise the classifier's score on fresh samples:
//
//   L_phi = -E[log s(phi(x_ref))] - E[log(1 - s(phi(G(z'))))]
//   L_gen = -E[log s(phi(G(z')))]
//
// with z' = adaptor(beta * map(z) + (1 - beta) * w_avg); the blend keeps
// z' spread around the source statistics instead of collapsing onto the
// single reference. Classifier inputs (real and fake) pass through the
// augmentation pipeline, whose strength ramps linearly from 0 to aug_max
// across the run.
//
// Two baselines reuse the loop with the plain adversarial objective on
// the same references: full_finetune updates everything, freeze_d pins
// the lower half of the critic. Sampling from any result goes through
// the blend actually used in training (1 for the baselines).

#include <cstdint>
#include <functional>
#include <vector>

#include "genda/config.hpp"
#include "genda/nets.hpp"

namespace genda {

struct AdaptStep {
    long long iter = 0;
    long long samples_seen = 0;  // generated samples consumed by the classifier side
    double loss_phi = 0;         // classifier (or critic) loss
    double loss_gen = 0;         // generator-side loss
    float aug_strength = 0;
};

using AdaptCallback = std::function<void(const AdaptStep&, Model&)>;

struct AdaptResult {
    Model model;
    AdaptMode mode = AdaptMode::genda;
    double sample_beta = 1.0;  // blend to use when drawing from the result
    long long iters = 0;
    double loss_phi = 0;
    double loss_gen = 0;
};

// `references` are flattened target images (or points), one per tensor
AdaptResult adapt(const Model& base, const std::vector<Tensor>& references,
                  const AdaptConfig& cfg, uint64_t seed, const AdaptCallback& callback = {});

// draw n samples from an adapted model with its training-time blend
Tensor sample_adapted(AdaptResult& result, RngStream& rng, int n);

}  // namespace genda
