#pragma once

// Distribution-level evaluation:
//
//   frechet_distance   squared Frechet (Wasserstein-2) distance between
//                      Gaussian fits of embedded sample sets
//   knn_precision_recall   manifold precision/recall: each set spans a
//                      union of balls out to its k-th neighbour, the other
//                      set is scored by membership
//   attribute_report   decodes rendered attributes from generated images
//                      and summarizes rates, confidence and position spread
//
// Embeddings come from a frozen randomly initialized critic-architecture
// network with a pinned seed; its fingerprint travels with every report so
// numbers from different builds are only compared when the embedder is
// byte-identical. The linear algebra (cyclic Jacobi eigensolver, PSD matrix
// square root) is exposed for reuse and direct testing.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "genda/nets.hpp"

namespace genda {

inline constexpr uint64_t kEmbedderSeed = 0xe3bedde2ull;

// --- small dense symmetric linear algebra (double, row-major) ---------

struct EigenDecomposition {
    std::vector<double> values;   // ascending
    std::vector<double> vectors;  // row k holds the eigenvector for values[k]
};

// cyclic Jacobi; converges when every off-diagonal magnitude is below 1e-10
EigenDecomposition symmetric_eigen(std::vector<double> a, int n);

// eigenvalues clamped at zero before the root, so slightly indefinite
// sample covariances are accepted
std::vector<double> psd_sqrt(const std::vector<double>& a, int n);

// --- moments and Frechet ----------------------------------------------

struct Moments {
    int n = 0;
    int dim = 0;
    std::vector<double> mean;
    std::vector<double> cov;  // unbiased, row-major dim x dim
};

Moments compute_moments(const Tensor& rows);

// squared distance ||m1-m2||^2 + tr(C1 + C2 - 2 sqrt(sqrt(C1) C2 sqrt(C1)))
double frechet_from_moments(const Moments& a, const Moments& b);

// --- embedding ---------------------------------------------------------

struct Embedder {
    Model net;
    uint64_t fingerprint = 0;
};

Embedder make_embedder(int input_dim, uint64_t seed = kEmbedderSeed);
Tensor embed(Embedder& e, const Tensor& rows);  // [n, input_dim] -> [n, features]

// embeds both sets, warns (if asked) when a Gaussian fit is under-determined
double frechet_distance(Embedder& e, const Tensor& real, const Tensor& fake,
                        std::vector<std::string>* warnings = nullptr);

struct PrecisionRecall {
    double precision = 0;  // fraction of fake samples on the real manifold
    double recall = 0;     // fraction of real samples on the fake manifold
};

PrecisionRecall knn_precision_recall(const Tensor& real_feats, const Tensor& fake_feats,
                                     int k = 3);

// --- decoded-attribute summary ------------------------------------------

struct AttributeReport {
    int n = 0;
    double glasses_rate = 0;
    double sketch_rate = 0;
    double square_rate = 0;        // among samples with a defined kind
    double kind_defined_rate = 0;
    double mean_confidence = 0;
    double mean_size = 0;
    // positions binned 4x4 over [0.25, 0.75]^2, entropy normalized to [0,1]
    std::array<int, 16> position_histogram{};
    double position_entropy = 0;
};

AttributeReport attribute_report(const Tensor& rows, int res);

}  // namespace genda
