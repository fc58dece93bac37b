#include "genda/augment.hpp"

#include <algorithm>

#include "genda/errors.hpp"

namespace genda {

int augment_images(GraphT<float>& g, int x, int batch, int res, float strength, RngStream& rng,
                   AugmentCounts* counts) {
    if (strength <= 0.f) return x;
    const int dim = 3 * res * res;
    if (g.tape.shape(x) != Shape{batch, dim})
        throw ShapeError("augment_images: node is " + shape_str(g.tape.shape(x)) +
                         ", expected [" + std::to_string(batch) + "," + std::to_string(dim) +
                         "]");

    const int shift_max = std::max(1, res / 8);
    const int cut_side = std::max(2, res / 4);

    std::vector<int32_t> idx(size_t(batch) * dim);
    std::vector<float> bright(size_t(batch) * dim, 0.f);
    std::vector<float> mask(size_t(batch) * dim, 1.f);
    bool any_geo = false, any_bright = false, any_cut = false;

    for (int b = 0; b < batch; ++b) {
        bool flip = rng.bernoulli(strength);
        int dx = 0, dy = 0;
        if (rng.bernoulli(strength)) {
            dx = int(rng.below(uint64_t(2 * shift_max + 1))) - shift_max;
            dy = int(rng.below(uint64_t(2 * shift_max + 1))) - shift_max;
            if (counts) ++counts->translated;
        }
        if (flip && counts) ++counts->flipped;
        any_geo |= flip || dx != 0 || dy != 0;

        const size_t base = size_t(b) * dim;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < res; ++y) {
                int sy = std::clamp(y - dy, 0, res - 1);
                for (int px = 0; px < res; ++px) {
                    int sx = std::clamp(px - dx, 0, res - 1);
                    if (flip) sx = res - 1 - sx;
                    idx[base + (size_t(c) * res + y) * res + px] =
                        int32_t(base + (size_t(c) * res + sy) * res + sx);
                }
            }

        if (rng.bernoulli(strength)) {
            float delta = float(rng.uniform(-0.25, 0.25));
            std::fill(bright.begin() + long(base), bright.begin() + long(base) + dim, delta);
            any_bright = true;
            if (counts) ++counts->brightened;
        }

        if (rng.bernoulli(strength)) {
            int cx0 = int(rng.below(uint64_t(res - cut_side + 1)));
            int cy0 = int(rng.below(uint64_t(res - cut_side + 1)));
            for (int c = 0; c < 3; ++c)
                for (int y = cy0; y < cy0 + cut_side; ++y)
                    for (int px = cx0; px < cx0 + cut_side; ++px)
                        mask[base + (size_t(c) * res + y) * res + px] = 0.f;
            any_cut = true;
            if (counts) ++counts->cut;
        }
    }

    int out = x;
    if (any_geo) out = g.tape.remap(out, std::move(idx));
    if (any_bright) {
        out = g.tape.add(out, g.tape.constant(Tensor({batch, dim}, std::move(bright))));
        // clamp to [-1,1]: x -> 1 - relu(2 - relu(x + 1)), relu = zero-slope leak
        Tensor ones = Tensor::full({dim}, 1.f);
        Tensor twos = Tensor::full({dim}, 2.f);
        int t = g.tape.leaky_relu(g.tape.add(out, g.tape.constant(ones)), 0.0);
        t = g.tape.leaky_relu(g.tape.add(g.tape.scale(t, -1.0), g.tape.constant(twos)), 0.0);
        out = g.tape.add(g.tape.scale(t, -1.0), g.tape.constant(std::move(ones)));
    }
    if (any_cut) out = g.tape.mul_elem(out, g.tape.constant(Tensor({batch, dim}, std::move(mask))));
    return out;
}

}  // namespace genda
