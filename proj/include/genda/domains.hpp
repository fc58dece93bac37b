#pragma once

// Procedural image domain with a deterministic renderer and a matching
// attribute reader, plus a 2D mixture domain for fast distribution tests.
//
// The renderer and the reader are designed as a pair: every rendered image
// can be decoded back to its generating attributes. That gives training and
// evaluation a ground-truth oracle (how many generated samples carry glasses,
// how diverse are the positions) without any learned perception model.
//
// Rendering rules, in paint order, on pixel centers ((x+0.5)/R, (y+0.5)/R),
// no anti-aliasing, all channels in [-1, 1]:
//   background   saturated hue wheel color of bg_hue
//   shape        complementary hue (bg_hue + 0.5). Circles at full value,
//                squares at 0.75 value, so the fill color identifies the kind
//                at any raster size.
//   circle       (px-cx)^2 + (py-cy)^2 <= size^2
//   square       max(|px-cx|, |py-cy|) <= size
//   glasses      near-black band (-0.95) across the shape's horizontal
//                extent, centered a third of the way down the shape,
//                half-thickness max(0.2*size, 1/R), clipped to the shape's
//                vertical extent
//   sketch       all pixels collapsed to luminance, then shape boundary
//                pixels (inside with a 4-neighbor outside) drawn at -0.5

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "genda/rng.hpp"
#include "genda/tensor.hpp"

namespace genda {

enum class ShapeKind { circle, square };

struct ShapeParams {
    float bg_hue = 0.f;  // [0,1)
    ShapeKind kind = ShapeKind::circle;
    float cx = 0.5f, cy = 0.5f;  // [0.25, 0.75]
    float size = 0.2f;           // [0.15, 0.3], half-extent
    bool glasses = false;
    bool sketch = false;
};

// renderer constants, shared with the reader
namespace shade {
inline constexpr float kSquareValue = 0.75f;   // square fill value multiplier
inline constexpr float kBand = -0.95f;         // glasses band level
inline constexpr float kEdge = -0.5f;          // sketch outline level
inline constexpr float kDarkThresh = -0.88f;   // "near-black" cutoff
inline constexpr float kBgTight = 0.02f;       // foreground cutoff, clean images
inline constexpr float kBgDiff = 0.12f;        // foreground cutoff, noisy images
inline constexpr float kDiffuseFrac = 0.55f;   // tight-mask area that flags noise
inline constexpr float kSketchSpread = 0.35f;  // mean channel spread cutoff
}  // namespace shade

// hue wheel (s=v=1) mapped to [-1,1]; hue_rgb(h) + hue_rgb(h+0.5) == (0,0,0)
std::array<float, 3> hue_rgb(float h);

// [3, res, res], planar channel layout
Tensor render(const ShapeParams& params, int res);

struct AttributeEstimate {
    bool kind_defined = false;
    ShapeKind kind = ShapeKind::circle;
    float cx = 0.5f, cy = 0.5f, size = 0.f;
    bool glasses = false;
    bool sketch = false;
    float confidence = 0.f;  // [0,1]; how much of the image the model explains
};

// Decodes attributes from an image shaped [3,R,R] or flat [3*R*R].
// Exact on rendered images; nearest-rule estimates plus a confidence score
// on anything else.
AttributeEstimate extract_attributes(const Tensor& image);

// ---------------------------------------------------------------------------
// distributions over the image domain

struct DomainSpec {
    std::string name = "shapes";
    int res = 16;
    float p_square = 0.5f;
    float p_glasses = 0.3f;
    float p_sketch = 0.3f;
    // fixed conditioning; unset fields sample from their default ranges
    std::optional<float> hue, cx, cy, size;
    std::optional<ShapeKind> kind;
    std::optional<bool> glasses, sketch;
};

// Field draw order is fixed (hue, kind, cx, cy, size, glasses, sketch), all
// from the caller's stream; fixed fields consume no draws.
ShapeParams sample_params(const DomainSpec& spec, RngStream& rng);

// 8-gaussian ring and friends, for mode-coverage tests where rendering would
// only slow things down
struct Gauss2DSpec {
    std::vector<std::array<float, 2>> centers;
    float sigma = 0.05f;
};

Gauss2DSpec ring_spec(int modes = 8, float radius = 0.7f, float sigma = 0.05f);

// one spec that pretraining/eval can sample real batches from
struct Domain {
    enum class Family { shapes, gauss2d };
    Family family = Family::shapes;
    std::string name = "shapes";
    DomainSpec shapes;
    Gauss2DSpec gauss;

    bool image_output() const { return family == Family::shapes; }
    int res() const { return shapes.res; }
    int output_dim() const { return image_output() ? 3 * shapes.res * shapes.res : 2; }
};

// "shapes" or "ring8"; throws ConfigError otherwise
Domain domain_by_name(const std::string& name);

// "glasses=true,sketch=false,kind=circle,hue=0.2,p_sketch=0.5,..." applied to
// a shapes domain; throws ConfigError on unknown keys or bad values
void apply_overrides(Domain& domain, const std::string& overrides);

// [n, output_dim] rows drawn from the domain distribution
Tensor sample_real_batch(const Domain& domain, RngStream& rng, int n);

// flattened copy of a [3,R,R] image, and back
Tensor flatten_image(const Tensor& image);
Tensor unflatten_image(const Tensor& row, int res);

struct Reference {
    Tensor image;  // flat [output_dim]
    ShapeParams params;
};

Reference make_reference(const DomainSpec& spec, RngStream& rng);

}  // namespace genda
