#include "genda/cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "genda/adapt.hpp"
#include "genda/analysis.hpp"
#include "genda/augment.hpp"
#include "genda/checkpoint.hpp"
#include "genda/config.hpp"
#include "genda/domains.hpp"
#include "genda/errors.hpp"
#include "genda/metrics.hpp"
#include "genda/pretrain.hpp"

namespace genda {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// --- small shared pieces ------------------------------------------------

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << text;
    f.flush();
    if (!f) throw IoError("short write to " + path);
}

void write_json_file(const std::string& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

json read_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

uint64_t bytes_hash(const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 1469598103934665603ull;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

// "ring8" or "shapes,glasses=true,res=12"
Domain domain_from_arg(const std::string& arg) {
    size_t comma = arg.find(',');
    Domain d = domain_by_name(arg.substr(0, comma));
    if (comma != std::string::npos) apply_overrides(d, arg.substr(comma + 1));
    return d;
}

// the domain a checkpoint was trained on, reconstructed from its metadata
Domain domain_from_meta(const json& meta) {
    Domain d = domain_by_name(meta.value("domain", "shapes"));
    if (meta.contains("config") && meta["config"].contains("pretrain"))
        apply_overrides(d, meta["config"]["pretrain"].value("domain_overrides", ""));
    return d;
}

// --- reference resolution ------------------------------------------------

struct ResolvedRef {
    Tensor image;          // flat [output_dim]
    json desc;             // provenance recorded into the artifacts
    std::string overrides; // conditioning keys for spec refs, "" for files
};

// A reference is either a snapshot file carrying a rendered "image" tensor,
// or a conditioning spec like "glasses=true,seed=7" rendered from the base
// model's training domain. An optional seed=N pair pins the free attributes;
// otherwise they derive from the run seed and the reference's position.
ResolvedRef resolve_reference(const std::string& spec, const Domain& train_domain,
                              uint64_t run_seed, int index) {
    ResolvedRef out;
    if (fs::exists(spec)) {
        Checkpoint ck = load_checkpoint(spec);
        const Tensor* img = ck.find("image");
        if (!img || img->shape.size() != 1)
            throw ShapeError(spec +
                             ": no rank-1 'image' tensor; render-domain produces usable files");
        out.image = *img;
        out.desc = {{"source", "file"}, {"path", spec}};
    } else {
        if (!train_domain.image_output())
            throw ConfigError("reference '" + spec +
                              "': conditioning specs need an image domain; for point domains "
                              "pass a file made by render-domain");
        std::optional<uint64_t> ref_seed;
        std::string overrides;
        size_t pos = 0;
        while (pos <= spec.size()) {
            size_t end = spec.find(',', pos);
            if (end == std::string::npos) end = spec.size();
            std::string kv = spec.substr(pos, end - pos);
            pos = end + 1;
            if (kv.empty()) continue;
            if (kv.rfind("seed=", 0) == 0) {
                try {
                    ref_seed = std::stoull(kv.substr(5));
                } catch (...) {
                    throw ConfigError("reference '" + spec + "': bad seed value");
                }
            } else {
                if (!overrides.empty()) overrides += ',';
                overrides += kv;
            }
        }
        Domain d = train_domain;
        if (!overrides.empty()) apply_overrides(d, overrides);
        uint64_t seed = ref_seed ? *ref_seed
                                 : Streams::derive(run_seed, "reference." + std::to_string(index));
        RngStream rng(seed);
        Reference ref = make_reference(d.shapes, rng);
        out.image = std::move(ref.image);
        out.overrides = overrides;
        out.desc = {{"source", "spec"},
                    {"spec", spec},
                    {"seed", seed},
                    {"params",
                     {{"hue", ref.params.bg_hue},
                      {"kind", ref.params.kind == ShapeKind::circle ? "circle" : "square"},
                      {"cx", ref.params.cx},
                      {"cy", ref.params.cy},
                      {"size", ref.params.size},
                      {"glasses", ref.params.glasses},
                      {"sketch", ref.params.sketch}}}};
    }
    out.desc["hash"] =
        hash_hex(bytes_hash(out.image.data.data(), out.image.data.size() * sizeof(float)));
    return out;
}

// --- sampling and evaluation ----------------------------------------------

// draws in chunks so a 5000-sample eval never holds a full-batch tape
Tensor sample_generated(Model& m, double beta, RngStream& rng, int n) {
    const int dim = m.dims.output_dim();
    Tensor out = Tensor::zeros({n, dim});
    for (int done = 0; done < n;) {
        int take = std::min(512, n - done);
        Tensor z = sample_latents<float>(rng, take, m.dims.latent);
        Tensor x = generate_adapted(m, z, beta);
        std::copy(x.data.begin(), x.data.end(), out.data.begin() + size_t(done) * dim);
        done += take;
    }
    return out;
}

using Sampler = std::function<Tensor(RngStream&, int)>;

struct EvalSetup {
    Domain domain;
    int n_real = 5000;
    int n_fake = 5000;
    int k = 3;
    uint64_t seed = 1234;
    uint64_t embedder_seed = kEmbedderSeed;
    double beta = 1.0;  // recorded only; the sampler already applies it
};

// one embedding pass feeds both the Frechet fit and the kNN manifolds
json eval_report(const EvalSetup& s, const Sampler& sample_fake) {
    Streams streams(s.seed);
    Tensor real = sample_real_batch(s.domain, streams.data, s.n_real);
    Tensor fake = sample_fake(streams.latent, s.n_fake);

    Embedder emb = make_embedder(s.domain.output_dim(), s.embedder_seed);
    Tensor fr = embed(emb, real), ff = embed(emb, fake);
    Moments mr = compute_moments(fr), mf = compute_moments(ff);
    std::vector<std::string> warnings;
    auto check = [&](const Moments& m, const char* name) {
        if (m.n < m.dim + 1)
            warnings.push_back(std::string(name) + " set has " + std::to_string(m.n) +
                               " samples for a " + std::to_string(m.dim) +
                               "-dim covariance; the Gaussian fit is under-determined");
    };
    check(mr, "real");
    check(mf, "fake");

    PrecisionRecall pr = knn_precision_recall(fr, ff, s.k);

    json rep = {{"frechet", frechet_from_moments(mr, mf)},
                {"precision", pr.precision},
                {"recall", pr.recall},
                {"k", s.k},
                {"n_real", s.n_real},
                {"n_fake", s.n_fake},
                {"attribute_stats", nullptr},
                {"embedder_fingerprint", hash_hex(emb.fingerprint)},
                {"beta", s.beta},
                {"domain", s.domain.name},
                {"seed", s.seed},
                {"warnings", warnings}};
    if (s.domain.image_output()) {
        AttributeReport ar = attribute_report(fake, s.domain.res());
        rep["attribute_stats"] = {{"n", ar.n},
                                  {"glasses_rate", ar.glasses_rate},
                                  {"sketch_rate", ar.sketch_rate},
                                  {"square_rate", ar.square_rate},
                                  {"kind_defined_rate", ar.kind_defined_rate},
                                  {"mean_confidence", ar.mean_confidence},
                                  {"mean_size", ar.mean_size},
                                  {"position_entropy", ar.position_entropy},
                                  {"position_histogram", ar.position_histogram}};
    }
    return rep;
}

// --- pretrain --------------------------------------------------------------

struct PretrainArgs {
    std::string config_path, out_path, log_path;
    std::optional<uint64_t> seed;
    std::optional<long long> budget;
    bool desk = false;
};

int cmd_pretrain(const PretrainArgs& a, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_run_config(a.config_path);
    if (a.desk) apply_desk_preset(cfg);
    if (a.budget) cfg.pretrain.budget = *a.budget;
    uint64_t seed = resolve_seed(a.seed, seed_from_env(), cfg.seed);
    for (const auto& w : cfg.warnings) err << "warning: " << w << "\n";

    const long long iters = cfg.pretrain.budget / cfg.pretrain.batch;
    const long long every = std::max<long long>(1, iters / 200);
    json curve = json::array();
    auto t0 = std::chrono::steady_clock::now();
    PretrainResult res = pretrain(cfg.pretrain, seed, [&](const PretrainStep& st, Model&) {
        if (st.iter % every == 0 || st.iter + 1 == iters)
            curve.push_back({{"iter", st.iter}, {"loss_d", st.loss_d}, {"loss_g", st.loss_g}});
    });

    save_model(a.out_path, res.model,
               {{"seed", seed},
                {"domain", res.domain.name},
                {"w_avg_decay", cfg.pretrain.w_avg_decay},
                {"config", config_echo(cfg)}});

    std::string fingerprint = hash_hex(params_fingerprint(res.model));
    write_json_file(a.log_path.empty() ? a.out_path + ".log.json" : a.log_path,
                    {{"checkpoint", a.out_path},
                     {"file_hash", hash_hex(file_hash(a.out_path))},
                     {"params_fingerprint", fingerprint},
                     {"seed", seed},
                     {"iters", res.iters},
                     {"final_loss_d", res.loss_d},
                     {"final_loss_g", res.loss_g},
                     {"wall_ms", elapsed_ms(t0)},
                     {"curve", curve}});
    out << "wrote " << a.out_path << " (" << res.iters << " iters on " << res.domain.name
        << ", fingerprint " << fingerprint << ")\n";
    return 0;
}

// --- adapt -------------------------------------------------------------------

struct AdaptArgs {
    std::string base_path, config_path, out_path, log_path, mode;
    std::vector<std::string> refs;
    std::optional<double> beta;
    std::optional<long long> budget;
    std::optional<uint64_t> seed;
    bool desk = false;
};

int cmd_adapt(const AdaptArgs& a, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_run_config(a.config_path);
    if (a.desk) apply_desk_preset(cfg);
    if (!a.mode.empty()) cfg.adapt.mode = a.mode;
    if (a.beta) {
        if (!(*a.beta > 0 && *a.beta <= 1))
            throw ConfigError("adapt.beta must lie in (0,1], got " + std::to_string(*a.beta));
        cfg.adapt.beta = *a.beta;
        if (*a.beta < 0.5)
            cfg.warnings.push_back("adapt.beta=" + std::to_string(*a.beta) +
                                   " pulls samples hard toward the average latent; expect low "
                                   "diversity below 0.5");
    }
    if (a.budget) cfg.adapt.budget = *a.budget;
    uint64_t seed = resolve_seed(a.seed, seed_from_env(), cfg.seed);
    for (const auto& w : cfg.warnings) err << "warning: " << w << "\n";

    LoadedModel base = load_model(a.base_path);
    uint64_t base_hash = file_hash(a.base_path);
    Domain train_domain = domain_from_meta(base.meta);

    std::vector<Tensor> images;
    json ref_desc = json::array();
    for (size_t i = 0; i < a.refs.size(); ++i) {
        ResolvedRef r = resolve_reference(a.refs[i], train_domain, seed, int(i));
        images.push_back(std::move(r.image));
        ref_desc.push_back(std::move(r.desc));
    }

    const long long iters = cfg.adapt.budget / cfg.adapt.batch;
    const long long every = std::max<long long>(1, iters / 200);
    json curve = json::array();
    auto t0 = std::chrono::steady_clock::now();
    AdaptResult res = adapt(base.model, images, cfg.adapt, seed, [&](const AdaptStep& st, Model&) {
        if (st.iter % every == 0 || st.iter + 1 == iters)
            curve.push_back({{"iter", st.iter},
                             {"loss_phi", st.loss_phi},
                             {"loss_gen", st.loss_gen},
                             {"aug_strength", st.aug_strength}});
    });

    save_artifacts(a.out_path, res.model, base_hash,
                   {{"mode", adapt_mode_name(res.mode)},
                    {"beta", res.sample_beta},
                    {"seed", seed},
                    {"base", a.base_path},
                    {"references", ref_desc},
                    {"config", config_echo(cfg)}});

    write_json_file(a.log_path.empty() ? a.out_path + ".log.json" : a.log_path,
                    {{"artifacts", a.out_path},
                     {"base", a.base_path},
                     {"base_hash", hash_hex(base_hash)},
                     {"file_hash", hash_hex(file_hash(a.out_path))},
                     {"mode", adapt_mode_name(res.mode)},
                     {"beta", res.sample_beta},
                     {"multi_reference", a.refs.size() > 1},
                     {"n_references", a.refs.size()},
                     {"seed", seed},
                     {"iters", res.iters},
                     {"final_loss_phi", res.loss_phi},
                     {"final_loss_gen", res.loss_gen},
                     {"wall_ms", elapsed_ms(t0)},
                     {"curve", curve}});
    out << "wrote " << a.out_path << " (mode " << adapt_mode_name(res.mode) << ", "
        << res.iters << " iters, " << a.refs.size() << " reference"
        << (a.refs.size() == 1 ? "" : "s") << ")\n";
    return 0;
}

// --- eval ---------------------------------------------------------------------

struct EvalArgs {
    std::string base_path, artifacts_path, domain_arg, out_path, compare_path;
    int n_real = 5000, n_fake = 5000, k = 3;
    std::optional<uint64_t> seed, embedder_seed;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
    LoadedModel base = load_model(a.base_path);
    uint64_t base_hash = file_hash(a.base_path);

    double beta = 1.0;
    if (!a.artifacts_path.empty()) {
        json art_meta = apply_artifacts(base.model, a.artifacts_path, base_hash);
        beta = art_meta.value("beta", 1.0);
    }

    EvalSetup s;
    s.domain = a.domain_arg.empty() ? domain_from_meta(base.meta) : domain_from_arg(a.domain_arg);
    s.n_real = a.n_real;
    s.n_fake = a.n_fake;
    s.k = a.k;
    s.seed = resolve_seed(a.seed, seed_from_env(), base.meta.value("seed", uint64_t(1234)));
    if (a.embedder_seed) s.embedder_seed = *a.embedder_seed;
    s.beta = beta;

    Model& m = base.model;
    json rep = eval_report(
        s, [&](RngStream& rng, int n) { return sample_generated(m, beta, rng, n); });

    if (!a.compare_path.empty()) {
        json other = read_json_file(a.compare_path);
        std::string ours = rep["embedder_fingerprint"];
        std::string theirs = other.value("embedder_fingerprint", "");
        if (ours != theirs)
            throw FingerprintError(a.compare_path + " was scored with embedder " + theirs +
                                   " but this run uses " + ours +
                                   "; the numbers are not comparable");
        rep["compare"] = {{"path", a.compare_path},
                          {"frechet_delta", rep["frechet"].get<double>() -
                                                other.value("frechet", 0.0)},
                          {"precision_delta", rep["precision"].get<double>() -
                                                  other.value("precision", 0.0)},
                          {"recall_delta", rep["recall"].get<double>() -
                                               other.value("recall", 0.0)}};
    }

    write_json_file(a.out_path, rep);
    out << "frechet " << rep["frechet"].get<double>() << " precision "
        << rep["precision"].get<double>() << " recall " << rep["recall"].get<double>() << "\n";
    return 0;
}

// --- ablate ----------------------------------------------------------------

// Training loop for architecture variants that the supported modes do not
// cover. Mirrors the adaptation loop step for step: classifier update on the
// current generator, then a generator update on fresh latents, with the same
// augmentation ramp and divergence guard.
struct VariantHooks {
    std::function<int(GraphT<float>&, Model&, int)> adapt_w;  // post-truncation latent edit
    std::function<int(GraphT<float>&, Model&, int)> head;     // critic over backbone features
    std::vector<Tensor*> gen_params, critic_params;
    double beta = 0.7;
};

struct VariantResult {
    double loss_phi = 0, loss_gen = 0;
    long long iters = 0;
};

VariantResult train_variant(Model& model, const std::vector<Tensor>& references,
                            const AdaptConfig& cfg, uint64_t seed, VariantHooks& h) {
    const Dims& dims = model.dims;
    const int dim = dims.output_dim();
    for (const auto& r : references)
        if (r.size() != size_t(dim))
            throw ShapeError("reference has " + std::to_string(r.size()) +
                             " values, the generator makes " + std::to_string(dim));

    std::unordered_set<const void*> critic_set, gen_set;
    for (auto* t : h.critic_params) critic_set.insert(t);
    for (auto* t : h.gen_params) gen_set.insert(t);
    AdamConfig critic_ac, gen_ac;
    critic_ac.lr = cfg.lr_classifier;
    gen_ac.lr = cfg.lr_adaptor;
    AdamOpt<float> opt_critic(h.critic_params, critic_ac), opt_gen(h.gen_params, gen_ac);

    auto guard = [](double loss, const char* which, long long iter) {
        if (!(loss < 100.0))
            throw DivergenceError(std::string(which) + " loss " + std::to_string(loss) +
                                  " at iteration " + std::to_string(iter));
    };

    Streams streams(seed);
    VariantResult out;
    out.iters = cfg.budget / cfg.batch;
    const bool images = dims.image_output();

    auto make_real_batch = [&](long long iter) {
        Tensor batch = Tensor::zeros({cfg.batch, dim});
        for (int i = 0; i < cfg.batch; ++i) {
            const Tensor& r = references[size_t(iter * cfg.batch + i) % references.size()];
            std::copy(r.data.begin(), r.data.end(), batch.data.begin() + size_t(i) * dim);
        }
        return batch;
    };
    auto fake_node = [&](GraphT<float>& g, const Tensor& z) {
        int w = truncate_latent(g, model, map_latent(g, model, g.input(z)), h.beta);
        return synthesize(g, model, h.adapt_w(g, model, w));
    };

    for (long long iter = 0; iter < out.iters; ++iter) {
        const float strength = !images || out.iters < 2
                                   ? 0.f
                                   : float(cfg.aug_max) * float(iter) / float(out.iters - 1);
        {
            Tensor real = make_real_batch(iter);
            Tensor z = sample_latents<float>(streams.latent, cfg.batch, dims.latent);
            GraphT<float> g;
            g.trainable = &critic_set;
            int fake = fake_node(g, z);
            int areal = augment_images(g, g.input(real), cfg.batch, dims.image_res, strength,
                                       streams.augment);
            int afake =
                augment_images(g, fake, cfg.batch, dims.image_res, strength, streams.augment);
            int loss = g.tape.sub(
                g.tape.scale(
                    g.tape.mean(g.tape.log_sigmoid(h.head(g, model, disc_features(g, model, areal)))),
                    -1.0),
                g.tape.mean(g.tape.log_sigmoid(
                    g.tape.scale(h.head(g, model, disc_features(g, model, afake)), -1.0))));
            out.loss_phi = g.tape.scalar(loss);
            guard(out.loss_phi, "classifier", iter);
            opt_critic.zero_grads();
            g.tape.backward(loss);
            opt_critic.step();
        }
        {
            Tensor z = sample_latents<float>(streams.latent, cfg.batch, dims.latent);
            GraphT<float> g;
            g.trainable = &gen_set;
            int fake = fake_node(g, z);
            int afake =
                augment_images(g, fake, cfg.batch, dims.image_res, strength, streams.augment);
            int loss = g.tape.scale(
                g.tape.mean(g.tape.log_sigmoid(h.head(g, model, disc_features(g, model, afake)))),
                -1.0);
            out.loss_gen = g.tape.scalar(loss);
            guard(out.loss_gen, "generator", iter);
            opt_gen.zero_grads();
            g.tape.backward(loss);
            opt_gen.step();
        }
    }
    return out;
}

struct AblateArgs {
    std::string config_path, out_dir;
    std::vector<std::string> refs;
    std::optional<uint64_t> seed;
    bool desk = false, parallel = false;
};

std::string row_stem(const std::string& row) {
    std::string s;
    for (char c : row) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            s += char(std::tolower(static_cast<unsigned char>(c)));
        else if (!s.empty() && s.back() != '_')
            s += '_';
    }
    while (!s.empty() && s.back() == '_') s.pop_back();
    return s;
}

std::string csv_field(const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string q = "\"";
    for (char c : v) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_run_config(a.config_path);
    if (a.desk) apply_desk_preset(cfg);
    uint64_t seed = resolve_seed(a.seed, seed_from_env(), cfg.seed);
    for (const auto& w : cfg.warnings) err << "warning: " << w << "\n";

    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (ec) throw IoError("cannot create " + a.out_dir + ": " + ec.message());

    PretrainResult base = pretrain(cfg.pretrain, seed);
    out << "pretrained base: " << base.domain.name << ", " << base.iters << " iters\n";

    std::vector<Tensor> images;
    std::string target_overrides;
    for (size_t i = 0; i < a.refs.size(); ++i) {
        ResolvedRef r = resolve_reference(a.refs[i], base.domain, seed, int(i));
        if (target_overrides.empty()) target_overrides = r.overrides;
        images.push_back(std::move(r.image));
    }

    // the evaluation target: the training distribution conditioned the same
    // way as the first spec-style reference (file refs carry no conditioning)
    EvalSetup es;
    es.domain = base.domain;
    if (!target_overrides.empty()) apply_overrides(es.domain, target_overrides);
    es.n_real = cfg.eval.n_real;
    es.n_fake = cfg.eval.n_fake;
    es.k = cfg.eval.knn_k;
    es.seed = seed;

    struct Cell {
        std::string grid, row, mode;
        double beta;
        std::function<json()> run;
    };
    std::vector<Cell> cells;

    auto adapt_cell = [&](std::string grid, std::string row, std::string mode, double beta) {
        Cell c{grid, row, mode, beta, {}};
        c.run = [&, mode, beta]() {
            AdaptConfig ac = cfg.adapt;
            ac.mode = mode;
            ac.beta = beta;
            auto res = std::make_shared<AdaptResult>(adapt(base.model, images, ac, seed));
            EvalSetup cell_es = es;
            cell_es.beta = res->sample_beta;
            json rep = eval_report(cell_es, [res](RngStream& rng, int n) {
                return sample_generated(res->model, res->sample_beta, rng, n);
            });
            rep["loss_phi"] = res->loss_phi;
            rep["loss_gen"] = res->loss_gen;
            rep["iters"] = res->iters;
            return rep;
        };
        cells.push_back(std::move(c));
    };

    // adaptor-only: the latent adaptor and output projection train against
    // the pretrained realness critic (upper backbone half stays live), no
    // attribute classifier, no diversity blend
    auto aa_cell = [&]() {
        Cell c{"components", "+AA", "adaptor_only", 1.0, {}};
        c.run = [&]() {
            auto m = std::make_shared<Model>(base.model);
            VariantHooks h;
            h.beta = 1.0;
            h.adapt_w = [](GraphT<float>& g, Model& mm, int w) {
                return apply_adaptor(g, mm, w);
            };
            h.head = [](GraphT<float>& g, Model& mm, int f) {
                return real_fake_logit(g, mm, f);
            };
            h.gen_params = {&m->adaptor.a, &m->adaptor.b, &m->synthesis.output_projection.w,
                            &m->synthesis.output_projection.b};
            int lower = (m->dims.disc_layers + 1) / 2;
            for (int i = lower; i < m->dims.disc_layers; ++i) {
                h.critic_params.push_back(&m->backbone.layers[size_t(i)].w);
                h.critic_params.push_back(&m->backbone.layers[size_t(i)].b);
            }
            h.critic_params.push_back(&m->real_fake_head.w);
            h.critic_params.push_back(&m->real_fake_head.b);
            VariantResult r = train_variant(*m, images, cfg.adapt, seed, h);
            EvalSetup cell_es = es;
            cell_es.beta = 1.0;
            json rep = eval_report(cell_es, [m](RngStream& rng, int n) {
                return sample_generated(*m, 1.0, rng, n);
            });
            rep["loss_phi"] = r.loss_phi;
            rep["loss_gen"] = r.loss_gen;
            rep["iters"] = r.iters;
            return rep;
        };
        cells.push_back(std::move(c));
    };

    // adaptor replaced by a residual two-layer MLP on w, zero-initialized so
    // training still starts from the identity
    auto heavy_adaptor_cell = [&]() {
        Cell c{"arch", "heavy_adaptor", "genda", cfg.adapt.beta, {}};
        c.run = [&]() {
            auto m = std::make_shared<Model>(base.model);
            RngStream init(Streams::derive(seed, "heavy_adaptor"));
            const int latent = m->dims.latent;
            auto l1 = std::make_shared<LinearT<float>>(LinearT<float>::init(latent, latent, init));
            auto l2 = std::make_shared<LinearT<float>>(LinearT<float>::init(latent, latent, init));
            std::fill(l2->w.data.begin(), l2->w.data.end(), 0.f);
            auto mlp_w = [l1, l2](GraphT<float>& g, Model&, int w) {
                int hid = g.tape.leaky_relu(linear(g, *l1, w), 0.2);
                return g.tape.add(w, linear(g, *l2, hid));
            };
            VariantHooks h;
            h.beta = cfg.adapt.beta;
            h.adapt_w = mlp_w;
            h.head = [](GraphT<float>& g, Model& mm, int f) {
                return attribute_logit(g, mm, f);
            };
            h.gen_params = {&l1->w, &l1->b, &l2->w, &l2->b, &m->synthesis.output_projection.w,
                            &m->synthesis.output_projection.b};
            h.critic_params = {&m->attr_classifier.w, &m->attr_classifier.b};
            VariantResult r = train_variant(*m, images, cfg.adapt, seed, h);
            EvalSetup cell_es = es;
            cell_es.beta = cfg.adapt.beta;
            double beta = cfg.adapt.beta;
            json rep = eval_report(cell_es, [m, l1, l2, mlp_w, beta](RngStream& rng, int n) {
                const int dim = m->dims.output_dim();
                Tensor all = Tensor::zeros({n, dim});
                for (int done = 0; done < n;) {
                    int take = std::min(512, n - done);
                    Tensor z = sample_latents<float>(rng, take, m->dims.latent);
                    GraphT<float> g;
                    int w = truncate_latent(g, *m, map_latent(g, *m, g.input(z)), beta);
                    int x = synthesize(g, *m, mlp_w(g, *m, w));
                    const auto& v = g.tape.value(x);
                    std::copy(v.begin(), v.end(), all.data.begin() + size_t(done) * dim);
                    done += take;
                }
                return all;
            });
            rep["loss_phi"] = r.loss_phi;
            rep["loss_gen"] = r.loss_gen;
            rep["iters"] = r.iters;
            return rep;
        };
        cells.push_back(std::move(c));
    };

    // attribute classifier widened to a two-layer MLP over backbone features
    auto heavy_classifier_cell = [&]() {
        Cell c{"arch", "heavy_classifier", "genda", cfg.adapt.beta, {}};
        c.run = [&]() {
            auto m = std::make_shared<Model>(base.model);
            RngStream init(Streams::derive(seed, "heavy_classifier"));
            const int feats = m->dims.disc_features;
            auto c1 = std::make_shared<LinearT<float>>(LinearT<float>::init(feats, feats, init));
            auto c2 = std::make_shared<LinearT<float>>(LinearT<float>::init(feats, 1, init));
            VariantHooks h;
            h.beta = cfg.adapt.beta;
            h.adapt_w = [](GraphT<float>& g, Model& mm, int w) {
                return apply_adaptor(g, mm, w);
            };
            h.head = [c1, c2](GraphT<float>& g, Model&, int f) {
                return linear(g, *c2, g.tape.leaky_relu(linear(g, *c1, f), 0.2));
            };
            h.gen_params = {&m->adaptor.a, &m->adaptor.b, &m->synthesis.output_projection.w,
                            &m->synthesis.output_projection.b};
            h.critic_params = {&c1->w, &c1->b, &c2->w, &c2->b};
            VariantResult r = train_variant(*m, images, cfg.adapt, seed, h);
            EvalSetup cell_es = es;
            cell_es.beta = cfg.adapt.beta;
            double beta = cfg.adapt.beta;
            json rep = eval_report(cell_es, [m, beta](RngStream& rng, int n) {
                return sample_generated(*m, beta, rng, n);
            });
            rep["loss_phi"] = r.loss_phi;
            rep["loss_gen"] = r.loss_gen;
            rep["iters"] = r.iters;
            return rep;
        };
        cells.push_back(std::move(c));
    };

    adapt_cell("components", "baseline", "freeze_d", 1.0);
    aa_cell();
    adapt_cell("components", "+AA+AC", "genda", 1.0);
    adapt_cell("components", "+AA+AC+DC", "genda", cfg.adapt.beta);
    for (double b : {0.5, 0.7, 0.9, 1.0}) adapt_cell("beta", "beta=" + std::to_string(b).substr(0, 3), "genda", b);
    adapt_cell("arch", "light", "genda", cfg.adapt.beta);
    heavy_adaptor_cell();
    heavy_classifier_cell();

    struct Outcome {
        json report;
        int code = 0;
        std::string error;
    };
    auto run_one = [](const Cell& c) {
        Outcome o;
        try {
            o.report = c.run();
        } catch (const Error& e) {
            o.code = exit_code_for(e);
            o.error = e.what();
        } catch (const std::exception& e) {
            o.code = 1;
            o.error = e.what();
        }
        return o;
    };

    std::vector<Outcome> outcomes(cells.size());
    if (a.parallel) {
        std::vector<std::future<Outcome>> futs;
        futs.reserve(cells.size());
        for (const auto& c : cells)
            futs.push_back(std::async(std::launch::async, run_one, std::cref(c)));
        for (size_t i = 0; i < futs.size(); ++i) outcomes[i] = futs[i].get();
    } else {
        for (size_t i = 0; i < cells.size(); ++i) outcomes[i] = run_one(cells[i]);
    }

    std::ostringstream csv;
    csv << "grid,row,mode,beta,status,frechet,precision,recall,error\n";
    int ok = 0, first_fail = 0;
    for (size_t i = 0; i < cells.size(); ++i) {
        const Cell& c = cells[i];
        Outcome& o = outcomes[i];
        std::string cell_path = a.out_dir + "/" + c.grid + "__" + row_stem(c.row) + ".json";
        csv << csv_field(c.grid) << ',' << csv_field(c.row) << ',' << c.mode << ',' << c.beta
            << ',';
        if (o.code == 0) {
            ++ok;
            o.report["grid"] = c.grid;
            o.report["row"] = c.row;
            o.report["mode"] = c.mode;
            write_json_file(cell_path, o.report);
            csv << "ok," << o.report["frechet"].get<double>() << ','
                << o.report["precision"].get<double>() << ',' << o.report["recall"].get<double>()
                << ",\n";
            out << c.grid << "/" << c.row << ": frechet " << o.report["frechet"].get<double>()
                << " recall " << o.report["recall"].get<double>() << "\n";
        } else {
            if (!first_fail) first_fail = o.code;
            write_json_file(cell_path, {{"grid", c.grid},
                                        {"row", c.row},
                                        {"mode", c.mode},
                                        {"error", o.error},
                                        {"exit_code", o.code}});
            csv << "error,,,," << csv_field(o.error) << "\n";
            err << c.grid << "/" << c.row << " failed: " << o.error << "\n";
        }
    }
    write_text(a.out_dir + "/summary.csv", csv.str());
    out << ok << "/" << cells.size() << " cells ok, summary in " << a.out_dir
        << "/summary.csv\n";
    return ok > 0 ? 0 : first_fail;
}

// --- analyze ------------------------------------------------------------------

std::string path_stem(const std::string& p) { return fs::path(p).stem().string(); }

struct AnalyzePcaArgs {
    std::vector<std::string> artifacts, labels;
    std::string out_stem;
};

int cmd_analyze_pca(const AnalyzePcaArgs& a, std::ostream& out, std::ostream&) {
    if (a.artifacts.size() < 2)
        throw ConfigError("analyze pca needs at least two --artifacts");
    if (!a.labels.empty() && a.labels.size() != a.artifacts.size())
        throw ConfigError("--label count (" + std::to_string(a.labels.size()) +
                          ") must match --artifacts (" + std::to_string(a.artifacts.size()) + ")");

    const int n = int(a.artifacts.size());
    std::vector<double> rows;
    int dim = 0;
    std::vector<std::string> labels;
    for (int i = 0; i < n; ++i) {
        std::vector<double> v = adaptor_vector(load_checkpoint(a.artifacts[size_t(i)]));
        if (i == 0)
            dim = int(v.size());
        else if (int(v.size()) != dim)
            throw ShapeError(a.artifacts[size_t(i)] + ": adaptor has " +
                             std::to_string(v.size() / 2) + " latent dims, first file has " +
                             std::to_string(dim / 2));
        rows.insert(rows.end(), v.begin(), v.end());
        labels.push_back(a.labels.empty() ? path_stem(a.artifacts[size_t(i)])
                                          : a.labels[size_t(i)]);
    }

    const int c = std::min(2, n - 1);
    PcaResult res = pca(rows, n, dim, c);
    res.labels = labels;
    if (c == 1) {
        // single component: plot it against a zero axis
        std::vector<double> padded(size_t(n) * 2, 0.0);
        for (int i = 0; i < n; ++i) padded[size_t(i) * 2] = res.projections[size_t(i)];
        res.projections = std::move(padded);
        res.components.resize(size_t(2) * dim, 0.0);
        res.explained_variance_ratio.push_back(0.0);
    }
    emit_scatter(res, a.out_stem);

    double sil = silhouette(res.projections, n, 2, res.labels);
    write_json_file(a.out_stem + ".json",
                    {{"n", n},
                     {"labels", res.labels},
                     {"explained_variance_ratio", res.explained_variance_ratio},
                     {"silhouette", sil}});
    out << "wrote " << a.out_stem << ".{csv,svg,json}, silhouette " << sil << "\n";
    return 0;
}

struct AnalyzeLatentsArgs {
    std::string base_path, out_stem;
    std::vector<std::string> artifacts, labels;
    int codes = 2000;
    std::optional<uint64_t> seed;
};

int cmd_analyze_latents(const AnalyzeLatentsArgs& a, std::ostream& out, std::ostream&) {
    if (!a.labels.empty() && a.labels.size() != a.artifacts.size())
        throw ConfigError("--label count (" + std::to_string(a.labels.size()) +
                          ") must match --artifacts (" + std::to_string(a.artifacts.size()) + ")");
    LoadedModel base = load_model(a.base_path);
    uint64_t base_hash = file_hash(a.base_path);
    uint64_t seed = resolve_seed(a.seed, seed_from_env(), base.meta.value("seed", uint64_t(1234)));

    std::vector<std::unique_ptr<Model>> adapted;
    std::vector<LatentSource> sources;
    sources.push_back({"source", &base.model, 1.0});
    for (size_t i = 0; i < a.artifacts.size(); ++i) {
        auto m = std::make_unique<Model>(base.model);
        json meta = apply_artifacts(*m, a.artifacts[i], base_hash);
        sources.push_back({a.labels.empty() ? path_stem(a.artifacts[i]) : a.labels[i], m.get(),
                           meta.value("beta", 1.0)});
        adapted.push_back(std::move(m));
    }

    PcaResult res = latent_pca(sources, seed, a.codes);
    emit_scatter(res, a.out_stem);
    double sil = silhouette(res.projections, res.n, 2, res.labels);
    json source_names = json::array();
    for (const auto& s : sources) source_names.push_back(s.label);
    write_json_file(a.out_stem + ".json",
                    {{"n", res.n},
                     {"codes_per_source", a.codes},
                     {"sources", source_names},
                     {"seed", seed},
                     {"explained_variance_ratio", res.explained_variance_ratio},
                     {"silhouette", sil}});
    out << "wrote " << a.out_stem << ".{csv,svg,json}, silhouette " << sil << "\n";
    return 0;
}

struct AnalyzeInterpArgs {
    std::string base_path, artifacts_path, out_path;
    int steps = 8;
    std::optional<uint64_t> seed;
    std::optional<double> beta;
};

int cmd_analyze_interp(const AnalyzeInterpArgs& a, std::ostream& out, std::ostream&) {
    LoadedModel base = load_model(a.base_path);
    uint64_t base_hash = file_hash(a.base_path);
    double beta = 1.0;
    if (!a.artifacts_path.empty()) {
        json meta = apply_artifacts(base.model, a.artifacts_path, base_hash);
        beta = meta.value("beta", 1.0);
    }
    if (a.beta) {
        if (!(*a.beta > 0 && *a.beta <= 1))
            throw ConfigError("beta must lie in (0,1], got " + std::to_string(*a.beta));
        beta = *a.beta;
    }
    uint64_t seed = resolve_seed(a.seed, seed_from_env(), base.meta.value("seed", uint64_t(1234)));

    const int latent = base.model.dims.latent;
    RngStream rng(Streams::derive(seed, "interp"));
    Tensor zz = sample_latents<float>(rng, 2, latent);
    Tensor z1({latent}, std::vector<float>(zz.data.begin(), zz.data.begin() + latent));
    Tensor z2({latent}, std::vector<float>(zz.data.begin() + latent, zz.data.end()));

    Tensor frames = interpolate(base.model, z1, z2, beta, a.steps);
    Checkpoint ck;
    ck.meta = {{"kind", "frames"},
               {"steps", a.steps},
               {"beta", beta},
               {"seed", seed},
               {"base", a.base_path},
               {"artifacts", a.artifacts_path}};
    ck.tensors.push_back({"frames", frames});
    save_checkpoint(a.out_path, ck);
    out << "wrote " << a.out_path << " (" << a.steps << " frames, beta " << beta << ")\n";
    return 0;
}

// --- render-domain ---------------------------------------------------------

struct RenderArgs {
    std::string domain_arg, out_path;
    int n = 1;
    std::optional<uint64_t> seed;
};

int cmd_render_domain(const RenderArgs& a, std::ostream& out, std::ostream&) {
    if (a.n < 1) throw ConfigError("--n must be at least 1");
    Domain d = domain_from_arg(a.domain_arg);
    uint64_t seed = resolve_seed(a.seed, seed_from_env(), 1234);
    RngStream rng(Streams::derive(seed, "render"));

    Checkpoint ck;
    ck.meta = {{"kind", "rendered"}, {"domain", d.name}, {"seed", seed}, {"n", a.n}};
    if (a.n == 1) {
        if (d.image_output()) {
            Reference ref = make_reference(d.shapes, rng);
            ck.meta["params"] = {
                {"hue", ref.params.bg_hue},
                {"kind", ref.params.kind == ShapeKind::circle ? "circle" : "square"},
                {"cx", ref.params.cx},
                {"cy", ref.params.cy},
                {"size", ref.params.size},
                {"glasses", ref.params.glasses},
                {"sketch", ref.params.sketch}};
            ck.tensors.push_back({"image", ref.image});
        } else {
            Tensor row = sample_real_batch(d, rng, 1);
            ck.tensors.push_back({"image", Tensor({d.output_dim()}, std::move(row.data))});
        }
    } else {
        ck.tensors.push_back({"images", sample_real_batch(d, rng, a.n)});
    }
    save_checkpoint(a.out_path, ck);
    out << "wrote " << a.out_path << " (" << a.n << " sample" << (a.n == 1 ? "" : "s") << " from "
        << d.name << ")\n";
    return 0;
}

}  // namespace

// --- flag wiring ------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"one-shot generative domain adaptation workbench"};
    app.name("genda");
    app.require_subcommand(1);

    PretrainArgs pre;
    CLI::App* c_pre = app.add_subcommand("pretrain", "train a source-domain generator");
    c_pre->add_option("--config", pre.config_path, "run config JSON")->required();
    c_pre->add_option("--out", pre.out_path, "checkpoint to write")->required();
    c_pre->add_option("--log", pre.log_path, "log JSON path (default <out>.log.json)");
    c_pre->add_option("--seed", pre.seed, "overrides GENDA_SEED and the config seed");
    c_pre->add_option("--budget", pre.budget, "override the sample budget");
    c_pre->add_flag("--desk", pre.desk, "shrink budgets for a quick local run");

    AdaptArgs ad;
    CLI::App* c_ad = app.add_subcommand("adapt", "adapt a pretrained generator to references");
    c_ad->add_option("--base", ad.base_path, "pretrained checkpoint")->required();
    c_ad->add_option("--config", ad.config_path, "run config JSON")->required();
    c_ad->add_option("--ref", ad.refs,
                     "reference: rendered file or conditioning spec like glasses=true,seed=7")
        ->required();
    c_ad->add_option("--out", ad.out_path, "artifacts to write")->required();
    c_ad->add_option("--log", ad.log_path, "log JSON path (default <out>.log.json)");
    c_ad->add_option("--mode", ad.mode, "genda | full_finetune | freeze_d");
    c_ad->add_option("--beta", ad.beta, "diversity blend in (0,1]");
    c_ad->add_option("--budget", ad.budget, "override the sample budget");
    c_ad->add_option("--seed", ad.seed, "overrides GENDA_SEED and the config seed");
    c_ad->add_flag("--desk", ad.desk, "shrink budgets for a quick local run");

    EvalArgs ev;
    CLI::App* c_ev = app.add_subcommand("eval", "score a generator against a domain");
    c_ev->add_option("--base", ev.base_path, "pretrained checkpoint")->required();
    c_ev->add_option("--artifacts", ev.artifacts_path, "adapted parameters to apply");
    c_ev->add_option("--domain", ev.domain_arg,
                     "real distribution, e.g. shapes,glasses=true (default: training domain)");
    c_ev->add_option("--out", ev.out_path, "report JSON to write")->required();
    c_ev->add_option("--n-real", ev.n_real, "real sample count");
    c_ev->add_option("--n-fake", ev.n_fake, "generated sample count");
    c_ev->add_option("--k", ev.k, "neighbourhood size for precision/recall");
    c_ev->add_option("--seed", ev.seed, "overrides GENDA_SEED and the checkpoint seed");
    c_ev->add_option("--embedder-seed", ev.embedder_seed, "embedder weights seed");
    c_ev->add_option("--compare", ev.compare_path, "earlier report; deltas land in the output");

    AblateArgs ab;
    CLI::App* c_ab = app.add_subcommand("ablate", "run the component/beta/architecture grids");
    c_ab->add_option("--config", ab.config_path, "run config JSON")->required();
    c_ab->add_option("--out-dir", ab.out_dir, "directory for cell reports + summary.csv")
        ->required();
    c_ab->add_option("--ref", ab.refs, "references, as in adapt")->required();
    c_ab->add_option("--seed", ab.seed, "overrides GENDA_SEED and the config seed");
    c_ab->add_flag("--desk", ab.desk, "shrink budgets for a quick local run");
    c_ab->add_flag("--parallel", ab.parallel, "run cells concurrently");

    CLI::App* c_an = app.add_subcommand("analyze", "inspect adapted models");
    c_an->require_subcommand(1);

    AnalyzePcaArgs apca;
    CLI::App* c_apca = c_an->add_subcommand("pca", "project adaptor vectors to 2 components");
    c_apca->add_option("--artifacts", apca.artifacts, "adapted snapshots (repeat)")->required();
    c_apca->add_option("--label", apca.labels, "one label per artifacts file");
    c_apca->add_option("--out", apca.out_stem, "output stem for .csv/.svg/.json")->required();

    AnalyzeLatentsArgs alat;
    CLI::App* c_alat = c_an->add_subcommand("latents", "joint pca of post-adaptor latents");
    c_alat->add_option("--base", alat.base_path, "pretrained checkpoint")->required();
    c_alat->add_option("--artifacts", alat.artifacts, "adapted snapshots (repeat)");
    c_alat->add_option("--label", alat.labels, "one label per artifacts file");
    c_alat->add_option("--codes", alat.codes, "latent draws per source");
    c_alat->add_option("--seed", alat.seed, "overrides GENDA_SEED and the checkpoint seed");
    c_alat->add_option("--out", alat.out_stem, "output stem for .csv/.svg/.json")->required();

    AnalyzeInterpArgs ai;
    CLI::App* c_ai = c_an->add_subcommand("interp", "latent walk through the adapted pipeline");
    c_ai->add_option("--base", ai.base_path, "pretrained checkpoint")->required();
    c_ai->add_option("--artifacts", ai.artifacts_path, "adapted parameters to apply");
    c_ai->add_option("--steps", ai.steps, "frame count (default 8)");
    c_ai->add_option("--beta", ai.beta, "diversity blend override");
    c_ai->add_option("--seed", ai.seed, "overrides GENDA_SEED and the checkpoint seed");
    c_ai->add_option("--out", ai.out_path, "frames snapshot to write")->required();

    RenderArgs rd;
    CLI::App* c_rd = app.add_subcommand("render-domain", "sample a domain into a snapshot file");
    c_rd->add_option("--domain", rd.domain_arg, "e.g. shapes,glasses=true or ring8")->required();
    c_rd->add_option("--out", rd.out_path, "snapshot to write")->required();
    c_rd->add_option("--n", rd.n, "sample count (1 writes an 'image', more write 'images')");
    c_rd->add_option("--seed", rd.seed, "overrides GENDA_SEED");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        const CLI::App* h = &app;
        while (true) {
            const CLI::App* next = nullptr;
            for (const CLI::App* s : h->get_subcommands(nullptr))
                if (s->parsed()) next = s;
            if (!next) break;
            h = next;
        }
        out << h->help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return 2;
    }

    try {
        if (c_pre->parsed()) return cmd_pretrain(pre, out, err);
        if (c_ad->parsed()) return cmd_adapt(ad, out, err);
        if (c_ev->parsed()) return cmd_eval(ev, out, err);
        if (c_ab->parsed()) return cmd_ablate(ab, out, err);
        if (c_an->parsed()) {
            if (c_apca->parsed()) return cmd_analyze_pca(apca, out, err);
            if (c_alat->parsed()) return cmd_analyze_latents(alat, out, err);
            if (c_ai->parsed()) return cmd_analyze_interp(ai, out, err);
        }
        if (c_rd->parsed()) return cmd_render_domain(rd, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << "no command given\n";
    return 2;
}

}  // namespace genda
