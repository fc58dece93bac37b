#pragma once

// Differentiable image augmentation for classifier inputs on few-shot runs.
// Works on flattened [batch, 3*R*R] rows already on the tape, so gradients
// flow back into the generator through every transform:
//
//   flip        horizontal mirror               (index remap)
//   translate   shift up to R/8, border clamp   (index remap, fused with flip)
//   brightness  add u(-0.25, 0.25), then clamp to [-1,1] via two relu folds
//   cutout      zero a random R/4 square        (elementwise mask)
//
// Per sample, each transform fires independently with probability `strength`;
// decisions and parameters are drawn in that order, sample by sample, from
// the augment stream. Zero strength is a true no-op and consumes no draws.

#include "genda/nets.hpp"
#include "genda/rng.hpp"

namespace genda {

struct AugmentCounts {
    int flipped = 0;
    int translated = 0;
    int brightened = 0;
    int cut = 0;
};

// `x` must be a [batch, 3*res*res] node in `g`; returns the augmented node
int augment_images(GraphT<float>& g, int x, int batch, int res, float strength, RngStream& rng,
                   AugmentCounts* counts = nullptr);

}  // namespace genda
