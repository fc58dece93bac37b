#pragma once

// Model zoo: a style-based generator small enough to train on a desk machine,
// its discriminator, and the two attribute-adaptation pieces that get trained
// during domain transfer (elementwise latent adaptor, attribute classifier).
//
// Forward passes are free functions that record onto a GraphT. Which
// parameters receive gradients is decided per step by the trainable set, so
// the same builders serve pretraining, adaptation and frozen evaluation.

#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "genda/rng.hpp"
#include "genda/tensor.hpp"

namespace genda {

struct Dims {
    int latent = 64;        // z and w dimensionality
    int mapping_layers = 3;
    int hidden = 64;        // width of the learned constant and style layers
    int style_layers = 4;
    int image_res = 16;     // ignored when out_dim is set explicitly
    int out_dim = 0;        // 0 -> 3 * image_res^2; 2 for point-cloud domains
    int disc_features = 128;
    int disc_layers = 4;

    int output_dim() const { return out_dim > 0 ? out_dim : 3 * image_res * image_res; }
    bool image_output() const { return out_dim == 0; }
};

template <class T>
struct LinearT {
    TensorT<T> w, b;  // w: [in, out], b: [out]

    static LinearT init(int in, int out, RngStream& rng) {
        LinearT l;
        std::vector<T> wv(size_t(in) * out);
        T s = static_cast<T>(1.0 / std::sqrt(double(in)));
        for (auto& v : wv) v = static_cast<T>(rng.normal()) * s;
        l.w = TensorT<T>({in, out}, std::move(wv));
        l.b = TensorT<T>::zeros({out});
        return l;
    }
};

template <class T>
struct MappingNetworkT {
    std::vector<LinearT<T>> layers;  // latent -> latent, activation on all but last
};

template <class T>
struct StyleLayerT {
    LinearT<T> affine;  // w -> per-channel style s
    LinearT<T> main;    // h*s -> next h
};

template <class T>
struct SynthesisNetworkT {
    TensorT<T> const_input;             // learned h0
    std::vector<StyleLayerT<T>> layers;
    LinearT<T> output_projection;       // last hidden -> output, through tanh
};

template <class T>
struct DiscriminatorBackboneT {
    std::vector<LinearT<T>> layers;  // flattened input -> feature vector
};

// a * w + b, elementwise over the latent; identity at initialization
template <class T>
struct AttributeAdaptorT {
    TensorT<T> a, b;
};

template <class T>
struct ModelT {
    Dims dims;
    MappingNetworkT<T> mapping;
    SynthesisNetworkT<T> synthesis;
    DiscriminatorBackboneT<T> backbone;
    LinearT<T> real_fake_head;   // feature -> realness logit
    LinearT<T> attr_classifier;  // feature -> attribute logit (sigmoid outside)
    AttributeAdaptorT<T> adaptor;
    TensorT<T> w_avg;            // tracked mean mapped latent
};

using Model = ModelT<float>;

// Initialization draws from the init stream in a fixed order; weights are
// normal scaled by 1/sqrt(fan_in), biases zero, adaptor exactly identity.
template <class T>
ModelT<T> init_model(const Dims& dims, RngStream& rng) {
    ModelT<T> m;
    m.dims = dims;
    for (int i = 0; i < dims.mapping_layers; ++i)
        m.mapping.layers.push_back(LinearT<T>::init(dims.latent, dims.latent, rng));

    std::vector<T> cv(size_t(dims.hidden));
    for (auto& v : cv) v = static_cast<T>(rng.normal());
    m.synthesis.const_input = TensorT<T>({dims.hidden}, std::move(cv));
    for (int i = 0; i < dims.style_layers; ++i) {
        StyleLayerT<T> l;
        l.affine = LinearT<T>::init(dims.latent, dims.hidden, rng);
        l.main = LinearT<T>::init(dims.hidden, dims.hidden, rng);
        m.synthesis.layers.push_back(std::move(l));
    }
    m.synthesis.output_projection = LinearT<T>::init(dims.hidden, dims.output_dim(), rng);

    int in = dims.output_dim();
    for (int i = 0; i < dims.disc_layers; ++i) {
        m.backbone.layers.push_back(LinearT<T>::init(in, dims.disc_features, rng));
        in = dims.disc_features;
    }
    m.real_fake_head = LinearT<T>::init(dims.disc_features, 1, rng);
    m.attr_classifier = LinearT<T>::init(dims.disc_features, 1, rng);

    m.adaptor.a = TensorT<T>::full({dims.latent}, T(1));
    m.adaptor.b = TensorT<T>::zeros({dims.latent});
    m.w_avg = TensorT<T>::zeros({dims.latent});
    return m;
}

inline Model init_model(const Dims& dims, RngStream& rng) { return init_model<float>(dims, rng); }

// ---------------------------------------------------------------------------
// named parameters and partitions

template <class T>
struct NamedParam {
    std::string name;
    TensorT<T>* tensor;
};

template <class T>
std::vector<NamedParam<T>> named_params(ModelT<T>& m) {
    std::vector<NamedParam<T>> out;
    auto lin = [&](const std::string& base, LinearT<T>& l) {
        out.push_back({base + ".w", &l.w});
        out.push_back({base + ".b", &l.b});
    };
    for (size_t i = 0; i < m.mapping.layers.size(); ++i)
        lin("mapping." + std::to_string(i), m.mapping.layers[i]);
    out.push_back({"syn.const", &m.synthesis.const_input});
    for (size_t i = 0; i < m.synthesis.layers.size(); ++i) {
        lin("syn." + std::to_string(i) + ".affine", m.synthesis.layers[i].affine);
        lin("syn." + std::to_string(i) + ".main", m.synthesis.layers[i].main);
    }
    lin("syn.out", m.synthesis.output_projection);
    for (size_t i = 0; i < m.backbone.layers.size(); ++i)
        lin("disc." + std::to_string(i), m.backbone.layers[i]);
    lin("head", m.real_fake_head);
    lin("phi", m.attr_classifier);
    out.push_back({"adaptor.a", &m.adaptor.a});
    out.push_back({"adaptor.b", &m.adaptor.b});
    return out;
}

// everything worth checkpointing: parameters plus tracked state
template <class T>
std::vector<NamedParam<T>> named_state(ModelT<T>& m) {
    auto out = named_params(m);
    out.push_back({"w_avg", &m.w_avg});
    return out;
}

enum class AdaptMode { genda, full_finetune, freeze_d };

inline const char* adapt_mode_name(AdaptMode m) {
    switch (m) {
        case AdaptMode::genda: return "genda";
        case AdaptMode::full_finetune: return "full_finetune";
        case AdaptMode::freeze_d: return "freeze_d";
    }
    return "?";
}

template <class T>
struct Partition {
    std::vector<NamedParam<T>> trainable;
    std::vector<NamedParam<T>> frozen;
};

// Who trains in each mode:
//   genda         adaptor + output projection + attribute classifier
//   full_finetune everything
//   freeze_d      everything except the lower half of the backbone
// Together the two sides always cover every parameter exactly once.
template <class T>
Partition<T> parameter_partition(ModelT<T>& m, AdaptMode mode) {
    Partition<T> p;
    int frozen_disc_below = (m.dims.disc_layers + 1) / 2;  // lower half, rounded up
    for (auto& np : named_params(m)) {
        bool train = false;
        switch (mode) {
            case AdaptMode::genda:
                train = np.name.rfind("adaptor.", 0) == 0 || np.name.rfind("syn.out.", 0) == 0 ||
                        np.name.rfind("phi.", 0) == 0;
                break;
            case AdaptMode::full_finetune:
                train = true;
                break;
            case AdaptMode::freeze_d: {
                train = true;
                if (np.name.rfind("disc.", 0) == 0) {
                    int layer = std::stoi(np.name.substr(5));
                    train = layer >= frozen_disc_below;
                }
                break;
            }
        }
        (train ? p.trainable : p.frozen).push_back(np);
    }
    return p;
}

template <class T>
std::unordered_set<const void*> trainable_set(const Partition<T>& p) {
    std::unordered_set<const void*> s;
    for (const auto& np : p.trainable) s.insert(np.tensor);
    return s;
}

// ---------------------------------------------------------------------------
// forward recording

// Records one forward pass. Parameters registered through use() become
// gradient leaves only if they are in the trainable set; everything else
// enters the graph as a constant, which is what keeps frozen weights frozen.
template <class T>
struct GraphT {
    TapeT<T> tape;
    const std::unordered_set<const void*>* trainable = nullptr;

    int use(TensorT<T>& p) {
        auto it = ids_.find(&p);
        if (it != ids_.end()) return it->second;
        int id;
        if (trainable && trainable->count(&p)) {
            p.requires_grad = true;
            id = tape.leaf(p);
        } else {
            id = tape.constant(p);
        }
        ids_.emplace(&p, id);
        return id;
    }

    int input(const TensorT<T>& x) { return tape.constant(x); }

  private:
    std::unordered_map<const void*, int> ids_;
};

using Graph = GraphT<float>;

template <class T>
int linear(GraphT<T>& g, LinearT<T>& l, int x) {
    return g.tape.broadcast_add(g.tape.matmul(x, g.use(l.w)), g.use(l.b));
}

// z -> w. Input is projected onto the sphere of radius sqrt(latent_dim)
// before the MLP, the usual latent normalization.
template <class T>
int map_latent(GraphT<T>& g, ModelT<T>& m, int z) {
    int x = g.tape.scale(g.tape.l2_normalize(z), std::sqrt(double(m.dims.latent)));
    int last = int(m.mapping.layers.size()) - 1;
    for (int i = 0; i <= last; ++i) {
        x = linear(g, m.mapping.layers[i], x);
        if (i != last) x = g.tape.leaky_relu(x, 0.2);
    }
    return x;
}

// w -> output vector (tanh range). Every style layer reads the same w.
template <class T>
int synthesize(GraphT<T>& g, ModelT<T>& m, int w) {
    int batch = g.tape.shape(w)[0];
    int h0 = g.use(m.synthesis.const_input);
    int h = g.tape.broadcast_add(
        g.tape.constant(TensorT<T>::zeros({batch, m.dims.hidden})), h0);
    for (auto& layer : m.synthesis.layers) {
        int s = linear(g, layer.affine, w);
        h = g.tape.leaky_relu(linear(g, layer.main, g.tape.mul_elem(h, s)), 0.2);
    }
    return g.tape.tanh(linear(g, m.synthesis.output_projection, h));
}

// image/point batch -> feature batch
template <class T>
int disc_features(GraphT<T>& g, ModelT<T>& m, int x) {
    int f = x;
    for (auto& layer : m.backbone.layers) f = g.tape.leaky_relu(linear(g, layer, f), 0.2);
    return f;
}

template <class T>
int real_fake_logit(GraphT<T>& g, ModelT<T>& m, int features) {
    return linear(g, m.real_fake_head, features);
}

template <class T>
int attribute_logit(GraphT<T>& g, ModelT<T>& m, int features) {
    return linear(g, m.attr_classifier, features);
}

// w' = a*w + b rowwise
template <class T>
int apply_adaptor(GraphT<T>& g, ModelT<T>& m, int w) {
    return g.tape.add(g.tape.mul_elem(w, g.use(m.adaptor.a)), g.use(m.adaptor.b));
}

// w' = beta*w + (1-beta)*w_avg. beta == 1 short-circuits so that untruncated
// pipelines reproduce the plain forward bit for bit.
template <class T>
int truncate_latent(GraphT<T>& g, ModelT<T>& m, int w, double beta) {
    if (beta == 1.0) return w;
    TensorT<T> shifted = m.w_avg;
    for (auto& v : shifted.data) v = static_cast<T>(v * (1.0 - beta));
    return g.tape.broadcast_add(g.tape.scale(w, beta), g.tape.constant(shifted));
}

// ---------------------------------------------------------------------------
// sampling helpers

template <class T>
TensorT<T> sample_latents(RngStream& rng, int batch, int dim) {
    std::vector<T> d(size_t(batch) * dim);
    for (auto& v : d) v = static_cast<T>(rng.normal());
    return TensorT<T>({batch, dim}, std::move(d));
}

// plain generator pass, no adaptation machinery
template <class T>
TensorT<T> generate(ModelT<T>& m, const TensorT<T>& z) {
    GraphT<T> g;
    int out = synthesize(g, m, map_latent(g, m, g.input(z)));
    return TensorT<T>(g.tape.shape(out), g.tape.value(out));
}

// adapted generator pass: truncate, adapt, synthesize with tuned projection
template <class T>
TensorT<T> generate_adapted(ModelT<T>& m, const TensorT<T>& z, double beta) {
    GraphT<T> g;
    int w = map_latent(g, m, g.input(z));
    int out = synthesize(g, m, apply_adaptor(g, m, truncate_latent(g, m, w, beta)));
    return TensorT<T>(g.tape.shape(out), g.tape.value(out));
}

inline uint64_t params_fingerprint(Model& m) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (auto& np : named_params(m)) {
        h = fnv1a64(np.name, h);
        h = fnv1a64(np.tensor->data.data(), np.tensor->data.size() * sizeof(float), h);
    }
    return h;
}

}  // namespace genda
