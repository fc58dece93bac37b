#include "genda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "genda/domains.hpp"
#include "genda/errors.hpp"

namespace genda {

EigenDecomposition symmetric_eigen(std::vector<double> a, int n) {
    if (int(a.size()) != n * n) throw ShapeError("symmetric_eigen: matrix size mismatch");
    std::vector<double> v(size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[size_t(i) * n + i] = 1.0;

    auto off_max = [&] {
        double m = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) m = std::max(m, std::abs(a[size_t(p) * n + q]));
        return m;
    };

    for (int sweep = 0; sweep < 100 && off_max() > 1e-10; ++sweep) {
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                double apq = a[size_t(p) * n + q];
                if (std::abs(apq) <= 1e-300) continue;
                double theta = (a[size_t(q) * n + q] - a[size_t(p) * n + p]) / (2 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int i = 0; i < n; ++i) {  // A <- J^T A J on rows/cols p,q
                    double aip = a[size_t(i) * n + p], aiq = a[size_t(i) * n + q];
                    a[size_t(i) * n + p] = c * aip - s * aiq;
                    a[size_t(i) * n + q] = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = a[size_t(p) * n + i], aqi = a[size_t(q) * n + i];
                    a[size_t(p) * n + i] = c * api - s * aqi;
                    a[size_t(q) * n + i] = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = v[size_t(i) * n + p], viq = v[size_t(i) * n + q];
                    v[size_t(i) * n + p] = c * vip - s * viq;
                    v[size_t(i) * n + q] = s * vip + c * viq;
                }
            }
    }

    EigenDecomposition out;
    std::vector<int> order(size_t(n), 0);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return a[size_t(x) * n + x] < a[size_t(y) * n + y]; });
    out.values.resize(size_t(n));
    out.vectors.resize(size_t(n) * n);
    for (int k = 0; k < n; ++k) {
        out.values[size_t(k)] = a[size_t(order[size_t(k)]) * n + order[size_t(k)]];
        for (int i = 0; i < n; ++i)
            out.vectors[size_t(k) * n + i] = v[size_t(i) * n + order[size_t(k)]];
    }
    return out;
}

std::vector<double> psd_sqrt(const std::vector<double>& a, int n) {
    EigenDecomposition e = symmetric_eigen(a, n);
    std::vector<double> out(size_t(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        double lam = std::sqrt(std::max(0.0, e.values[size_t(k)]));
        if (lam == 0.0) continue;
        const double* vk = &e.vectors[size_t(k) * n];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) out[size_t(i) * n + j] += lam * vk[i] * vk[j];
    }
    return out;
}

Moments compute_moments(const Tensor& rows) {
    if (rows.shape.size() != 2) throw ShapeError("compute_moments: want [n, dim] rows");
    const int n = rows.shape[0], d = rows.shape[1];
    if (n < 2) throw ConfigError("compute_moments: need at least 2 samples");

    Moments m;
    m.n = n;
    m.dim = d;
    m.mean.assign(size_t(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) m.mean[size_t(j)] += rows.data[size_t(i) * d + j];
    for (auto& v : m.mean) v /= n;

    m.cov.assign(size_t(d) * d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < d; ++p) {
            double cp = rows.data[size_t(i) * d + p] - m.mean[size_t(p)];
            for (int q = p; q < d; ++q)
                m.cov[size_t(p) * d + q] +=
                    cp * (rows.data[size_t(i) * d + q] - m.mean[size_t(q)]);
        }
    for (int p = 0; p < d; ++p)
        for (int q = p; q < d; ++q) {
            m.cov[size_t(p) * d + q] /= (n - 1);
            m.cov[size_t(q) * d + p] = m.cov[size_t(p) * d + q];
        }
    return m;
}

double frechet_from_moments(const Moments& a, const Moments& b) {
    if (a.dim != b.dim) throw ShapeError("frechet_from_moments: dimension mismatch");
    const int d = a.dim;

    double mean_term = 0;
    for (int i = 0; i < d; ++i) {
        double diff = a.mean[size_t(i)] - b.mean[size_t(i)];
        mean_term += diff * diff;
    }

    std::vector<double> s1 = psd_sqrt(a.cov, d);
    std::vector<double> inner(size_t(d) * d, 0.0), tmp(size_t(d) * d, 0.0);
    for (int i = 0; i < d; ++i)  // tmp = s1 * cov_b
        for (int k = 0; k < d; ++k) {
            double s = s1[size_t(i) * d + k];
            if (s == 0.0) continue;
            for (int j = 0; j < d; ++j) tmp[size_t(i) * d + j] += s * b.cov[size_t(k) * d + j];
        }
    for (int i = 0; i < d; ++i)  // inner = tmp * s1
        for (int k = 0; k < d; ++k) {
            double s = tmp[size_t(i) * d + k];
            if (s == 0.0) continue;
            for (int j = 0; j < d; ++j) inner[size_t(i) * d + j] += s * s1[size_t(k) * d + j];
        }
    std::vector<double> root = psd_sqrt(inner, d);

    double trace_term = 0;
    for (int i = 0; i < d; ++i)
        trace_term += a.cov[size_t(i) * d + i] + b.cov[size_t(i) * d + i] -
                      2.0 * root[size_t(i) * d + i];

    return std::max(0.0, mean_term + trace_term);
}

Embedder make_embedder(int input_dim, uint64_t seed) {
    Dims dims;
    dims.latent = 8;  // generator half unused; kept tiny
    dims.mapping_layers = 1;
    dims.hidden = 8;
    dims.style_layers = 1;
    dims.out_dim = input_dim;
    dims.disc_features = 128;
    dims.disc_layers = 4;
    RngStream rng(Streams::derive(seed, "init"));
    Embedder e{init_model(dims, rng), 0};
    e.fingerprint = params_fingerprint(e.net);
    return e;
}

Tensor embed(Embedder& e, const Tensor& rows) {
    if (rows.shape.size() != 2 || rows.shape[1] != e.net.dims.output_dim())
        throw ShapeError("embed: rows are " + shape_str(rows.shape) + ", embedder wants [n," +
                         std::to_string(e.net.dims.output_dim()) + "]");
    GraphT<float> g;
    int f = disc_features(g, e.net, g.input(rows));
    return Tensor(g.tape.shape(f), g.tape.value(f));
}

double frechet_distance(Embedder& e, const Tensor& real, const Tensor& fake,
                        std::vector<std::string>* warnings) {
    Tensor fr = embed(e, real), ff = embed(e, fake);
    Moments mr = compute_moments(fr), mf = compute_moments(ff);
    if (warnings) {
        auto check = [&](const Moments& m, const char* name) {
            if (m.n < m.dim + 1)
                warnings->push_back(std::string(name) + " set has " + std::to_string(m.n) +
                                    " samples for a " + std::to_string(m.dim) +
                                    "-dim covariance; the Gaussian fit is under-determined");
        };
        check(mr, "real");
        check(mf, "fake");
    }
    return frechet_from_moments(mr, mf);
}

PrecisionRecall knn_precision_recall(const Tensor& real_feats, const Tensor& fake_feats, int k) {
    if (real_feats.shape.size() != 2 || fake_feats.shape.size() != 2 ||
        real_feats.shape[1] != fake_feats.shape[1])
        throw ShapeError("knn_precision_recall: want [n, dim] sets with matching dim");
    const int d = real_feats.shape[1];
    const int nr = real_feats.shape[0], nf = fake_feats.shape[0];
    if (k < 1 || k >= nr || k >= nf)
        throw ConfigError("knn_precision_recall: k must satisfy 1 <= k < set sizes");

    auto sq_dist = [d](const float* a, const float* b) {
        double s = 0;
        for (int i = 0; i < d; ++i) {
            double diff = double(a[i]) - double(b[i]);
            s += diff * diff;
        }
        return s;
    };
    // radius of the k-th neighbour within one set (self excluded)
    auto radii = [&](const Tensor& set, int n) {
        std::vector<double> out(size_t(n), 0.0);
        std::vector<double> dist(size_t(n), 0.0);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j)
                dist[size_t(j)] = i == j ? std::numeric_limits<double>::infinity()
                                         : sq_dist(&set.data[size_t(i) * d],
                                                   &set.data[size_t(j) * d]);
            std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
            out[size_t(i)] = dist[size_t(k - 1)];
        }
        return out;
    };
    auto covered = [&](const Tensor& points, int np, const Tensor& balls, int nb,
                       const std::vector<double>& r) {
        int hit = 0;
        for (int i = 0; i < np; ++i)
            for (int j = 0; j < nb; ++j)
                if (sq_dist(&points.data[size_t(i) * d], &balls.data[size_t(j) * d]) <=
                    r[size_t(j)]) {
                    ++hit;
                    break;
                }
        return double(hit) / np;
    };

    std::vector<double> rr = radii(real_feats, nr), rf = radii(fake_feats, nf);
    PrecisionRecall out;
    out.precision = covered(fake_feats, nf, real_feats, nr, rr);
    out.recall = covered(real_feats, nr, fake_feats, nf, rf);
    return out;
}

AttributeReport attribute_report(const Tensor& rows, int res) {
    if (rows.shape.size() != 2 || rows.shape[1] != 3 * res * res)
        throw ShapeError("attribute_report: rows are " + shape_str(rows.shape) +
                         ", expected [n," + std::to_string(3 * res * res) + "]");
    AttributeReport rep;
    rep.n = rows.shape[0];
    int defined = 0;
    const size_t stride = size_t(3) * res * res;
    for (int i = 0; i < rep.n; ++i) {
        Tensor row({3 * res * res},
                   std::vector<float>(rows.data.begin() + size_t(i) * stride,
                                      rows.data.begin() + (size_t(i) + 1) * stride));
        AttributeEstimate est = extract_attributes(row);
        rep.glasses_rate += est.glasses ? 1 : 0;
        rep.sketch_rate += est.sketch ? 1 : 0;
        rep.mean_confidence += est.confidence;
        rep.mean_size += est.size;
        if (est.kind_defined) {
            ++defined;
            rep.square_rate += est.kind == ShapeKind::square ? 1 : 0;
        }
        auto bin = [](float v) {
            return std::clamp(int((v - 0.25f) / 0.125f), 0, 3);
        };
        rep.position_histogram[size_t(bin(est.cy) * 4 + bin(est.cx))]++;
    }
    rep.glasses_rate /= rep.n;
    rep.sketch_rate /= rep.n;
    rep.mean_confidence /= rep.n;
    rep.mean_size /= rep.n;
    rep.kind_defined_rate = double(defined) / rep.n;
    rep.square_rate = defined ? rep.square_rate / defined : 0.0;

    double h = 0;
    for (int c : rep.position_histogram)
        if (c > 0) {
            double p = double(c) / rep.n;
            h -= p * std::log(p);
        }
    rep.position_entropy = h / std::log(16.0);
    return rep;
}

}  // namespace genda
