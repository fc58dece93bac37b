#pragma once

// Post-hoc inspection of adapted models:
//
//   adaptor_vector   one adaptation as a point in R^{2*latent}: [a-1 ; b].
//                    Untouched adaptors map to the origin, so distances
//                    compare what adaptation learned, not where it started.
//   pca              mean-centered principal components over row data,
//                    built on the metrics eigensolver
//   latent_pca       joint projection of post-adaptor latents drawn from
//                    several models, labeled per model
//   interpolate      a straight walk in z pushed through the full adapted
//                    pipeline, endpoints bitwise equal to direct synthesis
//   emit_scatter     scatter artifacts (SVG + CSV) for 2-component results
//   silhouette       cluster separation score for labeled rows

#include <string>
#include <vector>

#include "genda/checkpoint.hpp"
#include "genda/nets.hpp"

namespace genda {

std::vector<double> adaptor_vector(const Model& m);
// reads adaptor.a / adaptor.b straight from a snapshot; throws ShapeError
// when the snapshot does not carry them
std::vector<double> adaptor_vector(const Checkpoint& ck);

struct PcaResult {
    int n = 0;    // rows projected
    int dim = 0;  // input width
    std::vector<double> mean;         // size dim, the removed center
    std::vector<double> components;   // c orthonormal rows, descending variance
    std::vector<double> projections;  // n x c, row major
    std::vector<double> explained_variance_ratio;  // size c, nonincreasing
    std::vector<std::string> labels;  // size n when the caller attached them

    int count() const { return int(explained_variance_ratio.size()); }
};

// mean-centered only, no per-dimension standardization. Requires n >= 2 and
// 1 <= c <= min(n-1, dim). All-constant input yields zero variance ratios
// rather than an error.
PcaResult pca(const std::vector<double>& rows, int n, int dim, int c);
PcaResult pca(const Tensor& rows, int c);

// latents as the adapted sampler sees them: w' = A(beta*map(z) + (1-beta)*w_avg)
Tensor adapted_codes(Model& m, double beta, RngStream& rng, int n);

struct LatentSource {
    std::string label;
    Model* model = nullptr;
    double beta = 0.7;
};

// draws n_codes fresh z per source from one continuous stream, pushes them
// through each model's adapted path, and projects everything jointly
PcaResult latent_pca(const std::vector<LatentSource>& sources, uint64_t seed,
                     int n_codes = 2000, int c = 2);

// z1, z2 are rank-1 [latent]; returns [steps, output_dim]. Interior frames
// blend (1-t)*z1 + t*z2; the end frames reuse z1 and z2 unmodified so they
// match generate_adapted exactly.
Tensor interpolate(Model& m, const Tensor& z1, const Tensor& z2, double beta, int steps);

// writes stem.csv ("label,pc1,pc2" plus one row per point) and stem.svg
// (self-contained, one color per label). Byte-deterministic for fixed input.
void emit_scatter(const PcaResult& r, const std::string& stem);

// mean silhouette over labeled rows, Euclidean distance; points in
// singleton clusters (or with no other cluster present) score 0
double silhouette(const std::vector<double>& rows, int n, int dim,
                  const std::vector<std::string>& labels);

}  // namespace genda
