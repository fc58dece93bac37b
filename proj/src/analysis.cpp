#include "genda/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>

#include "genda/errors.hpp"
#include "genda/metrics.hpp"

namespace genda {

std::vector<double> adaptor_vector(const Model& m) {
    const int d = m.dims.latent;
    std::vector<double> v(size_t(2) * d, 0.0);
    for (int i = 0; i < d; ++i) {
        v[size_t(i)] = double(m.adaptor.a.data[size_t(i)]) - 1.0;
        v[size_t(d) + i] = double(m.adaptor.b.data[size_t(i)]);
    }
    return v;
}

std::vector<double> adaptor_vector(const Checkpoint& ck) {
    const Tensor* a = ck.find("adaptor.a");
    const Tensor* b = ck.find("adaptor.b");
    if (!a || !b) throw ShapeError("snapshot carries no adaptor tensors");
    if (a->shape != b->shape || a->shape.size() != 1)
        throw ShapeError("adaptor tensors have shapes " + shape_str(a->shape) + " and " +
                         shape_str(b->shape) + ", want matching rank-1");
    const int d = a->shape[0];
    std::vector<double> v(size_t(2) * d, 0.0);
    for (int i = 0; i < d; ++i) {
        v[size_t(i)] = double(a->data[size_t(i)]) - 1.0;
        v[size_t(d) + i] = double(b->data[size_t(i)]);
    }
    return v;
}

PcaResult pca(const std::vector<double>& rows, int n, int dim, int c) {
    if (n < 2) throw ConfigError("pca: need at least 2 rows");
    if (int(rows.size()) != n * dim) throw ShapeError("pca: row data size mismatch");
    if (c < 1 || c > std::min(n - 1, dim))
        throw ConfigError("pca: component count " + std::to_string(c) +
                          " outside [1, min(n-1, dim)] = [1, " +
                          std::to_string(std::min(n - 1, dim)) + "]");

    PcaResult r;
    r.n = n;
    r.dim = dim;
    r.mean.assign(size_t(dim), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) r.mean[size_t(j)] += rows[size_t(i) * dim + j];
    for (auto& v : r.mean) v /= n;

    std::vector<double> cov(size_t(dim) * dim, 0.0);
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < dim; ++p) {
            double cp = rows[size_t(i) * dim + p] - r.mean[size_t(p)];
            for (int q = p; q < dim; ++q)
                cov[size_t(p) * dim + q] += cp * (rows[size_t(i) * dim + q] - r.mean[size_t(q)]);
        }
    for (int p = 0; p < dim; ++p)
        for (int q = p; q < dim; ++q) {
            cov[size_t(p) * dim + q] /= (n - 1);
            cov[size_t(q) * dim + p] = cov[size_t(p) * dim + q];
        }

    EigenDecomposition e = symmetric_eigen(cov, dim);
    double total = 0;
    for (double lam : e.values) total += std::max(0.0, lam);

    r.components.resize(size_t(c) * dim);
    r.explained_variance_ratio.resize(size_t(c));
    for (int k = 0; k < c; ++k) {  // eigenvalues come back ascending
        int src = dim - 1 - k;
        r.explained_variance_ratio[size_t(k)] =
            total > 0 ? std::max(0.0, e.values[size_t(src)]) / total : 0.0;
        for (int j = 0; j < dim; ++j)
            r.components[size_t(k) * dim + j] = e.vectors[size_t(src) * dim + j];
    }

    r.projections.assign(size_t(n) * c, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < c; ++k) {
            double s = 0;
            for (int j = 0; j < dim; ++j)
                s += (rows[size_t(i) * dim + j] - r.mean[size_t(j)]) *
                     r.components[size_t(k) * dim + j];
            r.projections[size_t(i) * c + k] = s;
        }
    return r;
}

PcaResult pca(const Tensor& rows, int c) {
    if (rows.shape.size() != 2) throw ShapeError("pca: want [n, dim] rows");
    std::vector<double> d(rows.data.begin(), rows.data.end());
    return pca(d, rows.shape[0], rows.shape[1], c);
}

Tensor adapted_codes(Model& m, double beta, RngStream& rng, int n) {
    if (beta <= 0.0 || beta > 1.0)
        throw ConfigError("adapted_codes: beta must lie in (0, 1]");
    Tensor z = sample_latents<float>(rng, n, m.dims.latent);
    GraphT<float> g;
    int w = apply_adaptor(g, m, truncate_latent(g, m, map_latent(g, m, g.input(z)), beta));
    return Tensor(g.tape.shape(w), g.tape.value(w));
}

PcaResult latent_pca(const std::vector<LatentSource>& sources, uint64_t seed, int n_codes,
                     int c) {
    if (sources.empty()) throw ConfigError("latent_pca: no latent sources");
    if (n_codes < 2) throw ConfigError("latent_pca: need at least 2 codes per source");
    const int dim = sources.front().model->dims.latent;
    for (const auto& s : sources) {
        if (!s.model) throw ConfigError("latent_pca: null model for '" + s.label + "'");
        if (s.model->dims.latent != dim)
            throw ShapeError("latent_pca: '" + s.label + "' has latent width " +
                             std::to_string(s.model->dims.latent) + ", expected " +
                             std::to_string(dim));
    }

    RngStream rng(Streams::derive(seed, "latent"));
    std::vector<double> rows;
    rows.reserve(size_t(sources.size()) * n_codes * dim);
    std::vector<std::string> labels;
    labels.reserve(size_t(sources.size()) * n_codes);
    for (const auto& s : sources) {
        Tensor codes = adapted_codes(*s.model, s.beta, rng, n_codes);
        rows.insert(rows.end(), codes.data.begin(), codes.data.end());
        labels.insert(labels.end(), size_t(n_codes), s.label);
    }

    PcaResult r = pca(rows, int(sources.size()) * n_codes, dim, c);
    r.labels = std::move(labels);
    return r;
}

Tensor interpolate(Model& m, const Tensor& z1, const Tensor& z2, double beta, int steps) {
    if (steps < 2) throw ConfigError("interpolate: need at least 2 frames");
    Shape want{m.dims.latent};
    if (z1.shape != want || z2.shape != want)
        throw ShapeError("interpolate: endpoints are " + shape_str(z1.shape) + " and " +
                         shape_str(z2.shape) + ", want " + shape_str(want));

    const int d = m.dims.latent;
    std::vector<float> frames;
    int out_dim = 0;
    for (int t = 0; t < steps; ++t) {
        std::vector<float> zt(size_t(d), 0.f);
        if (t == 0) {
            zt = z1.data;
        } else if (t == steps - 1) {
            zt = z2.data;
        } else {
            float alpha = float(t) / float(steps - 1);
            for (int i = 0; i < d; ++i)
                zt[size_t(i)] = (1.f - alpha) * z1.data[size_t(i)] + alpha * z2.data[size_t(i)];
        }
        Tensor img = generate_adapted(m, Tensor({1, d}, std::move(zt)), beta);
        out_dim = img.shape[1];
        frames.insert(frames.end(), img.data.begin(), img.data.end());
    }
    return Tensor({steps, out_dim}, std::move(frames));
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

const char* kPalette[] = {"#4c78a8", "#f58518", "#54a24b", "#e45756",
                          "#72b7b2", "#b279a2", "#9d755d", "#eeca3b"};

void write_or_throw(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(body.data(), std::streamsize(body.size()));
    if (!out) throw IoError("short write to " + path);
}

}  // namespace

void emit_scatter(const PcaResult& r, const std::string& stem) {
    if (r.count() != 2) throw ConfigError("emit_scatter: need exactly 2 components");

    auto label_of = [&](int i) {
        return r.labels.empty() ? std::string("points") : r.labels[size_t(i)];
    };

    std::string csv = "label,pc1,pc2\n";
    for (int i = 0; i < r.n; ++i)
        csv += label_of(i) + "," + fmt(r.projections[size_t(i) * 2]) + "," +
               fmt(r.projections[size_t(i) * 2 + 1]) + "\n";
    write_or_throw(stem + ".csv", csv);

    // color per label, in order of first appearance
    std::vector<std::string> order;
    std::map<std::string, size_t> color;
    for (int i = 0; i < r.n; ++i)
        if (color.emplace(label_of(i), order.size()).second) order.push_back(label_of(i));

    double lo_x = 0, hi_x = 1, lo_y = 0, hi_y = 1;
    if (r.n > 0) {
        lo_x = lo_y = std::numeric_limits<double>::infinity();
        hi_x = hi_y = -lo_x;
        for (int i = 0; i < r.n; ++i) {
            lo_x = std::min(lo_x, r.projections[size_t(i) * 2]);
            hi_x = std::max(hi_x, r.projections[size_t(i) * 2]);
            lo_y = std::min(lo_y, r.projections[size_t(i) * 2 + 1]);
            hi_y = std::max(hi_y, r.projections[size_t(i) * 2 + 1]);
        }
    }
    auto widen = [](double& lo, double& hi) {
        double pad = (hi - lo) * 0.05;
        if (pad <= 0) pad = 1.0;
        lo -= pad;
        hi += pad;
    };
    widen(lo_x, hi_x);
    widen(lo_y, hi_y);

    const double W = 480, H = 360, M = 40;
    auto sx = [&](double x) { return M + (x - lo_x) / (hi_x - lo_x) * (W - 2 * M); };
    auto sy = [&](double y) { return H - M - (y - lo_y) / (hi_y - lo_y) * (H - 2 * M); };
    auto px = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"360\" "
                      "viewBox=\"0 0 480 360\">\n"
                      "<rect x=\"40\" y=\"40\" width=\"400\" height=\"280\" fill=\"none\" "
                      "stroke=\"#999\"/>\n";
    for (int i = 0; i < r.n; ++i) {
        const char* fill = kPalette[color[label_of(i)] % std::size(kPalette)];
        svg += "<circle cx=\"" + px(sx(r.projections[size_t(i) * 2])) + "\" cy=\"" +
               px(sy(r.projections[size_t(i) * 2 + 1])) + "\" r=\"3\" fill=\"" + fill +
               "\" fill-opacity=\"0.7\"/>\n";
    }
    for (size_t k = 0; k < order.size(); ++k) {
        svg += "<rect x=\"" + px(48.0 + 90.0 * double(k)) +
               "\" y=\"14\" width=\"10\" height=\"10\" fill=\"" +
               std::string(kPalette[k % std::size(kPalette)]) + "\"/>\n";
        svg += "<text x=\"" + px(62.0 + 90.0 * double(k)) +
               "\" y=\"23\" font-family=\"sans-serif\" font-size=\"11\">" + order[k] +
               "</text>\n";
    }
    svg += "</svg>\n";
    write_or_throw(stem + ".svg", svg);
}

double silhouette(const std::vector<double>& rows, int n, int dim,
                  const std::vector<std::string>& labels) {
    if (int(labels.size()) != n) throw ShapeError("silhouette: one label per row required");
    if (int(rows.size()) != n * dim) throw ShapeError("silhouette: row data size mismatch");
    if (n == 0) return 0.0;

    auto dist = [&](int i, int j) {
        double s = 0;
        for (int c = 0; c < dim; ++c) {
            double diff = rows[size_t(i) * dim + c] - rows[size_t(j) * dim + c];
            s += diff * diff;
        }
        return std::sqrt(s);
    };

    double total = 0;
    for (int i = 0; i < n; ++i) {
        std::map<std::string, std::pair<double, int>> per_label;  // sum, count
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            auto& acc = per_label[labels[size_t(j)]];
            acc.first += dist(i, j);
            acc.second += 1;
        }
        auto own = per_label.find(labels[size_t(i)]);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [label, acc] : per_label)
            if (label != labels[size_t(i)]) b = std::min(b, acc.first / acc.second);
        if (own == per_label.end() || !std::isfinite(b)) continue;  // singleton or one cluster
        double a = own->second.first / own->second.second;
        double denom = std::max(a, b);
        total += denom > 0 ? (b - a) / denom : 0.0;
    }
    return total / n;
}

}  // namespace genda
