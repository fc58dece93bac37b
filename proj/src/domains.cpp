#include "genda/domains.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "genda/errors.hpp"

namespace genda {

namespace {

float fracf(float x) { return x - std::floor(x); }

float clampf(float v, float lo, float hi) { return std::min(std::max(v, lo), hi); }

ShapeParams normalized(const ShapeParams& p) {
    ShapeParams q = p;
    q.bg_hue = fracf(q.bg_hue);
    q.cx = clampf(q.cx, 0.25f, 0.75f);
    q.cy = clampf(q.cy, 0.25f, 0.75f);
    q.size = clampf(q.size, 0.15f, 0.3f);
    return q;
}

std::array<float, 3> square_shade(std::array<float, 3> fill) {
    // value-scaled in [0,1] space: c -> 0.75c
    for (auto& v : fill) v = (v + 1.f) * 0.5f * shade::kSquareValue * 2.f - 1.f;
    return fill;
}

struct ImageView {
    const float* data;
    int res;
    float at(int c, int y, int x) const {
        return data[(size_t(c) * res + y) * res + x];
    }
};

ImageView view_of(const Tensor& image) {
    size_t n = image.size();
    if (n % 3 != 0) throw ShapeError("image must hold 3 channels, got " + shape_str(image.shape));
    int rr = int(std::lround(std::sqrt(double(n / 3))));
    if (size_t(rr) * rr * 3 != n)
        throw ShapeError("image size is not 3*R*R: " + shape_str(image.shape));
    if (image.shape.size() == 3 &&
        (image.shape[0] != 3 || image.shape[1] != rr || image.shape[2] != rr))
        throw ShapeError("expected [3,R,R] image, got " + shape_str(image.shape));
    return ImageView{image.data.data(), rr};
}

}  // namespace

std::array<float, 3> hue_rgb(float h) {
    h = fracf(h);
    float h6 = h * 6.f;
    int i = int(h6) % 6;
    float f = h6 - float(i);
    float r = 0, g = 0, b = 0;
    switch (i) {
        case 0: r = 1; g = f; b = 0; break;
        case 1: r = 1 - f; g = 1; b = 0; break;
        case 2: r = 0; g = 1; b = f; break;
        case 3: r = 0; g = 1 - f; b = 1; break;
        case 4: r = f; g = 0; b = 1; break;
        default: r = 1; g = 0; b = 1 - f; break;
    }
    return {2.f * r - 1.f, 2.f * g - 1.f, 2.f * b - 1.f};
}

Tensor render(const ShapeParams& params, int res) {
    if (res < 4) throw ShapeError("render: resolution must be at least 4");
    ShapeParams p = normalized(params);

    const std::array<float, 3> bg = hue_rgb(p.bg_hue);
    std::array<float, 3> fill = hue_rgb(p.bg_hue + 0.5f);
    if (p.kind == ShapeKind::square) fill = square_shade(fill);

    auto inside = [&](int x, int y) {
        if (x < 0 || y < 0 || x >= res || y >= res) return false;
        float px = (float(x) + 0.5f) / float(res);
        float py = (float(y) + 0.5f) / float(res);
        float dx = px - p.cx, dy = py - p.cy;
        if (p.kind == ShapeKind::circle) return dx * dx + dy * dy <= p.size * p.size;
        return std::max(std::abs(dx), std::abs(dy)) <= p.size;
    };

    float band_top = 0, band_bot = 0;
    if (p.glasses) {
        float yb = p.cy - p.size / 3.f;
        float hb = std::max(0.2f * p.size, 1.f / float(res));
        band_top = std::max(yb - hb, p.cy - p.size);
        band_bot = yb + hb;
    }

    Tensor img = Tensor::zeros({3, res, res});
    auto set = [&](int y, int x, const std::array<float, 3>& c) {
        for (int ch = 0; ch < 3; ++ch) img.data[(size_t(ch) * res + y) * res + x] = c[ch];
    };

    for (int y = 0; y < res; ++y) {
        float py = (float(y) + 0.5f) / float(res);
        for (int x = 0; x < res; ++x) {
            float px = (float(x) + 0.5f) / float(res);
            std::array<float, 3> c = inside(x, y) ? fill : bg;
            if (p.glasses && py >= band_top && py <= band_bot && px >= p.cx - p.size &&
                px <= p.cx + p.size)
                c = {shade::kBand, shade::kBand, shade::kBand};
            set(y, x, c);
        }
    }

    if (p.sketch) {
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                float l = 0.299f * img.data[(0 * size_t(res) + y) * res + x] +
                          0.587f * img.data[(1 * size_t(res) + y) * res + x] +
                          0.114f * img.data[(2 * size_t(res) + y) * res + x];
                set(y, x, {l, l, l});
            }
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                if (!inside(x, y)) continue;
                bool boundary = !inside(x - 1, y) || !inside(x + 1, y) || !inside(x, y - 1) ||
                                !inside(x, y + 1);
                if (boundary) set(y, x, {shade::kEdge, shade::kEdge, shade::kEdge});
            }
    }
    return img;
}

AttributeEstimate extract_attributes(const Tensor& image) {
    ImageView im = view_of(image);
    const int R = im.res;
    AttributeEstimate est;

    // sketch: the image is (near) grayscale everywhere
    double spread_sum = 0;
    for (int y = 0; y < R; ++y)
        for (int x = 0; x < R; ++x) {
            float lo = im.at(0, y, x), hi = lo;
            for (int c = 1; c < 3; ++c) {
                lo = std::min(lo, im.at(c, y, x));
                hi = std::max(hi, im.at(c, y, x));
            }
            spread_sum += hi - lo;
        }
    est.sketch = spread_sum / double(R * R) < shade::kSketchSpread;

    // background: modal quantized color (ties broken toward the lowest bin)
    struct Bin {
        int count = 0;
        double sum[3] = {0, 0, 0};
    };
    std::map<int, Bin> bins;
    auto bin_of = [](float v) { return std::clamp(int((v + 1.f) * 16.f), 0, 32); };
    for (int y = 0; y < R; ++y)
        for (int x = 0; x < R; ++x) {
            int key = (bin_of(im.at(0, y, x)) * 33 + bin_of(im.at(1, y, x))) * 33 +
                      bin_of(im.at(2, y, x));
            Bin& b = bins[key];
            b.count++;
            for (int c = 0; c < 3; ++c) b.sum[c] += im.at(c, y, x);
        }
    const Bin* best = nullptr;
    for (const auto& [key, b] : bins)
        if (!best || b.count > best->count) best = &b;
    std::array<float, 3> bg{};
    for (int c = 0; c < 3; ++c) bg[c] = float(best->sum[c] / best->count);
    double mode_frac = double(best->count) / double(R * R);

    // glasses: a horizontal run of near-black pixels
    auto dark = [&](int y, int x) {
        return im.at(0, y, x) <= shade::kDarkThresh && im.at(1, y, x) <= shade::kDarkThresh &&
               im.at(2, y, x) <= shade::kDarkThresh;
    };
    int need_run = std::max(2, R / 8);
    for (int y = 0; y < R && !est.glasses; ++y) {
        int run = 0;
        for (int x = 0; x < R; ++x) {
            run = dark(y, x) ? run + 1 : 0;
            if (run >= need_run) {
                est.glasses = true;
                break;
            }
        }
    }

    // Foreground support: anything that is not background. Clean renders use
    // exact palette colors, so a tight cutoff keeps even a sketch outline that
    // sits near the background luminance inside the mask. When the tight mask
    // swallows most of the image the background is noisy rather than flat;
    // fall back to the loose cutoff.
    float bg_tol = shade::kBgTight;
    {
        int tight_hits = 0;
        for (int y = 0; y < R; ++y)
            for (int x = 0; x < R; ++x)
                for (int c = 0; c < 3; ++c)
                    if (std::abs(im.at(c, y, x) - bg[c]) > shade::kBgTight) {
                        ++tight_hits;
                        break;
                    }
        if (float(tight_hits) > shade::kDiffuseFrac * float(R * R)) bg_tol = shade::kBgDiff;
    }
    auto fg = [&](int y, int x) {
        for (int c = 0; c < 3; ++c)
            if (std::abs(im.at(c, y, x) - bg[c]) > bg_tol) return true;
        return false;
    };
    int x0 = R, x1 = -1, y0 = R, y1 = -1;
    for (int y = 0; y < R; ++y)
        for (int x = 0; x < R; ++x)
            if (fg(y, x)) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }

    std::array<float, 3> cand_circle{}, cand_square{};
    for (int c = 0; c < 3; ++c) {
        cand_circle[c] = -bg[c];
        cand_square[c] = -0.25f - 0.75f * bg[c];
    }

    if (x1 < 0) {
        // nothing but background; report the prior and low confidence
        est.kind_defined = false;
        est.cx = est.cy = 0.5f;
        est.size = 0.f;
        est.confidence = 0.2f * float(mode_frac);
        return est;
    }

    // When the background luminance of a sketch lands on the outline level,
    // the one pixel thick outline is indistinguishable from background and the
    // support box loses exactly one pixel per side; grow it back.
    if (est.sketch && bg_tol == shade::kBgTight) {
        float bg_lum = 0.299f * bg[0] + 0.587f * bg[1] + 0.114f * bg[2];
        if (std::abs(bg_lum - shade::kEdge) <= shade::kBgTight) {
            x0 = std::max(0, x0 - 1);
            y0 = std::max(0, y0 - 1);
            x1 = std::min(R - 1, x1 + 1);
            y1 = std::min(R - 1, y1 + 1);
        }
    }

    est.cx = float(x0 + x1 + 1) / float(2 * R);
    est.cy = float(y0 + y1 + 1) / float(2 * R);
    est.size = float((x1 - x0) + (y1 - y0) + 2) / float(4 * R);

    // kind from the fill color: the shape interior sits at the complementary
    // color, full value for circles, 0.75 value for squares. Luminance obeys
    // the same two formulas, so this works on sketches unchanged.
    auto near_edge = [&](int y, int x) {
        if (!est.sketch) return false;
        for (int c = 0; c < 3; ++c)
            if (std::abs(im.at(c, y, x) - shade::kEdge) > 0.03f) return false;
        return true;
    };
    Bin interior;
    std::map<int, Bin> interior_bins;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            if (!fg(y, x) || dark(y, x) || near_edge(y, x)) continue;
            int key = (bin_of(im.at(0, y, x)) * 33 + bin_of(im.at(1, y, x))) * 33 +
                      bin_of(im.at(2, y, x));
            Bin& b = interior_bins[key];
            b.count++;
            for (int c = 0; c < 3; ++c) b.sum[c] += im.at(c, y, x);
        }
    est.kind_defined = true;
    std::array<float, 3> fill_seen{};
    bool have_fill = false;
    {
        const Bin* ib = nullptr;
        for (const auto& [key, b] : interior_bins)
            if (!ib || b.count > ib->count) ib = &b;
        if (ib) {
            have_fill = true;
            for (int c = 0; c < 3; ++c) fill_seen[c] = float(ib->sum[c] / ib->count);
        }
    }
    if (have_fill) {
        double dc = 0, ds = 0;
        for (int c = 0; c < 3; ++c) {
            dc += double(fill_seen[c] - cand_circle[c]) * (fill_seen[c] - cand_circle[c]);
            ds += double(fill_seen[c] - cand_square[c]) * (fill_seen[c] - cand_square[c]);
        }
        est.kind = dc <= ds ? ShapeKind::circle : ShapeKind::square;
    } else {
        // ink-only sketch (interior blends into the background): a square's
        // outline owns all four support corners, a circle's leaves them empty
        bool corners = fg(y0, x0) && fg(y0, x1) && fg(y1, x0) && fg(y1, x1);
        est.kind = corners ? ShapeKind::square : ShapeKind::circle;
    }

    // confidence: fraction of pixels explained by the decoded palette
    std::array<float, 3> fill_model =
        est.kind == ShapeKind::circle ? cand_circle : cand_square;
    if (have_fill) fill_model = fill_seen;
    int explained = 0;
    for (int y = 0; y < R; ++y)
        for (int x = 0; x < R; ++x) {
            auto close_to = [&](const std::array<float, 3>& m, float tol) {
                for (int c = 0; c < 3; ++c)
                    if (std::abs(im.at(c, y, x) - m[c]) > tol) return false;
                return true;
            };
            bool ok = close_to(bg, 0.15f) || close_to(fill_model, 0.15f) ||
                      dark(y, x) || near_edge(y, x);
            // sketch flattens fill to luminance; accept its luminance too
            if (!ok && est.sketch) {
                float lum = 0.299f * fill_model[0] + 0.587f * fill_model[1] +
                            0.114f * fill_model[2];
                ok = close_to({lum, lum, lum}, 0.15f);
            }
            if (ok) ++explained;
        }
    est.confidence = float(explained) / float(R * R);
    return est;
}

// ---------------------------------------------------------------------------

ShapeParams sample_params(const DomainSpec& spec, RngStream& rng) {
    ShapeParams p;
    p.bg_hue = spec.hue ? *spec.hue : float(rng.uniform());
    p.kind = spec.kind ? *spec.kind
                       : (rng.bernoulli(spec.p_square) ? ShapeKind::square : ShapeKind::circle);
    p.cx = spec.cx ? *spec.cx : float(rng.uniform(0.25, 0.75));
    p.cy = spec.cy ? *spec.cy : float(rng.uniform(0.25, 0.75));
    p.size = spec.size ? *spec.size : float(rng.uniform(0.15, 0.3));
    p.glasses = spec.glasses ? *spec.glasses : rng.bernoulli(spec.p_glasses);
    p.sketch = spec.sketch ? *spec.sketch : rng.bernoulli(spec.p_sketch);
    return p;
}

Gauss2DSpec ring_spec(int modes, float radius, float sigma) {
    Gauss2DSpec spec;
    spec.sigma = sigma;
    for (int k = 0; k < modes; ++k) {
        double a = 2.0 * M_PI * k / modes;
        spec.centers.push_back({radius * float(std::cos(a)), radius * float(std::sin(a))});
    }
    return spec;
}

Domain domain_by_name(const std::string& name) {
    Domain d;
    d.name = name;
    if (name == "shapes") {
        d.family = Domain::Family::shapes;
        return d;
    }
    if (name == "ring8") {
        d.family = Domain::Family::gauss2d;
        d.gauss = ring_spec();
        return d;
    }
    throw ConfigError("unknown domain '" + name + "' (expected shapes or ring8)");
}

void apply_overrides(Domain& domain, const std::string& overrides) {
    if (overrides.empty()) return;
    size_t pos = 0;
    while (pos < overrides.size()) {
        size_t end = overrides.find(',', pos);
        if (end == std::string::npos) end = overrides.size();
        std::string kv = overrides.substr(pos, end - pos);
        pos = end + 1;
        size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("domain override '" + kv + "' is not key=value");
        std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);

        auto as_float = [&] {
            try {
                return std::stof(val);
            } catch (...) {
                throw ConfigError("domain override " + key + ": bad number '" + val + "'");
            }
        };
        auto as_bool = [&] {
            if (val == "true" || val == "1") return true;
            if (val == "false" || val == "0") return false;
            throw ConfigError("domain override " + key + ": expected true/false, got '" + val +
                              "'");
        };

        if (domain.family == Domain::Family::gauss2d) {
            if (key == "sigma")
                domain.gauss.sigma = as_float();
            else if (key == "modes")
                domain.gauss = ring_spec(int(as_float()), 0.7f, domain.gauss.sigma);
            else
                throw ConfigError("unknown ring domain override '" + key + "'");
            continue;
        }

        DomainSpec& s = domain.shapes;
        if (key == "hue") s.hue = as_float();
        else if (key == "cx") s.cx = as_float();
        else if (key == "cy") s.cy = as_float();
        else if (key == "size") s.size = as_float();
        else if (key == "glasses") s.glasses = as_bool();
        else if (key == "sketch") s.sketch = as_bool();
        else if (key == "kind") {
            if (val == "circle") s.kind = ShapeKind::circle;
            else if (val == "square") s.kind = ShapeKind::square;
            else throw ConfigError("domain override kind: expected circle or square");
        }
        else if (key == "p_square") s.p_square = as_float();
        else if (key == "p_glasses") s.p_glasses = as_float();
        else if (key == "p_sketch") s.p_sketch = as_float();
        else if (key == "res") s.res = int(as_float());
        else throw ConfigError("unknown shapes domain override '" + key + "'");
    }
}

Tensor flatten_image(const Tensor& image) {
    return Tensor({int(image.size())}, image.data);
}

Tensor unflatten_image(const Tensor& row, int res) {
    if (row.size() != size_t(3) * res * res)
        throw ShapeError("unflatten_image: size " + std::to_string(row.size()) +
                         " does not match res " + std::to_string(res));
    return Tensor({3, res, res}, row.data);
}

Tensor sample_real_batch(const Domain& domain, RngStream& rng, int n) {
    int dim = domain.output_dim();
    Tensor batch = Tensor::zeros({n, dim});
    if (domain.family == Domain::Family::shapes) {
        for (int i = 0; i < n; ++i) {
            ShapeParams p = sample_params(domain.shapes, rng);
            Tensor img = render(p, domain.shapes.res);
            std::copy(img.data.begin(), img.data.end(), batch.data.begin() + size_t(i) * dim);
        }
    } else {
        const auto& g = domain.gauss;
        for (int i = 0; i < n; ++i) {
            const auto& c = g.centers[size_t(rng.below(g.centers.size()))];
            batch.data[size_t(i) * 2] = c[0] + g.sigma * float(rng.normal());
            batch.data[size_t(i) * 2 + 1] = c[1] + g.sigma * float(rng.normal());
        }
    }
    return batch;
}

Reference make_reference(const DomainSpec& spec, RngStream& rng) {
    Reference ref;
    ref.params = sample_params(spec, rng);
    ref.image = flatten_image(render(ref.params, spec.res));
    return ref;
}

}  // namespace genda
