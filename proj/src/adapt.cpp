#include "genda/adapt.hpp"

#include <string>

#include "genda/augment.hpp"
#include "genda/errors.hpp"

namespace genda {

namespace {

void guard(double loss, const char* which, long long iter) {
    if (!(loss < 100.0))
        throw DivergenceError(std::string(which) + " loss " + std::to_string(loss) +
                              " at iteration " + std::to_string(iter));
}

AdaptMode mode_from_string(const std::string& s) {
    if (s == "genda") return AdaptMode::genda;
    if (s == "full_finetune") return AdaptMode::full_finetune;
    if (s == "freeze_d") return AdaptMode::freeze_d;
    throw ConfigError("unknown adaptation mode '" + s + "'");
}

}  // namespace

AdaptResult adapt(const Model& base, const std::vector<Tensor>& references,
                  const AdaptConfig& cfg, uint64_t seed, const AdaptCallback& callback) {
    if (references.empty()) throw ConfigError("adaptation needs at least one reference");

    AdaptResult out;
    out.mode = mode_from_string(cfg.mode);
    out.model = base;
    Model& model = out.model;
    const Dims& dims = model.dims;
    const int dim = dims.output_dim();
    for (const auto& r : references)
        if (r.size() != size_t(dim))
            throw ShapeError("reference has " + std::to_string(r.size()) +
                             " values, the generator makes " + std::to_string(dim));

    const bool genda_mode = out.mode == AdaptMode::genda;
    out.sample_beta = genda_mode ? cfg.beta : 1.0;
    const double train_beta = out.sample_beta;

    // critic side learns to tell the reference apart, generator side chases it
    auto part = parameter_partition(model, out.mode);
    std::vector<Tensor*> critic_params, gen_params;
    std::unordered_set<const void*> critic_set, gen_set;
    for (auto& np : part.trainable) {
        bool critic, gen;
        if (genda_mode) {
            critic = np.name.rfind("phi.", 0) == 0;
            gen = np.name.rfind("adaptor.", 0) == 0 || np.name.rfind("syn.out.", 0) == 0;
        } else {
            critic = np.name.rfind("disc.", 0) == 0 || np.name.rfind("head.", 0) == 0;
            gen = np.name.rfind("mapping.", 0) == 0 || np.name.rfind("syn.", 0) == 0;
        }
        if (critic) {
            critic_params.push_back(np.tensor);
            critic_set.insert(np.tensor);
        } else if (gen) {
            gen_params.push_back(np.tensor);
            gen_set.insert(np.tensor);
        }
        // the baselines formally carry adaptor and phi as tunable; their
        // objective never reaches them, so they stay at the identity
    }
    AdamConfig critic_ac, gen_ac;
    critic_ac.lr = cfg.lr_classifier;
    gen_ac.lr = cfg.lr_adaptor;
    AdamOpt<float> opt_critic(critic_params, critic_ac), opt_gen(gen_params, gen_ac);

    Streams streams(seed);
    out.iters = cfg.budget / cfg.batch;
    const bool images = dims.image_output();

    auto make_real_batch = [&](long long iter) {
        Tensor batch = Tensor::zeros({cfg.batch, dim});
        for (int i = 0; i < cfg.batch; ++i) {
            const Tensor& r =
                references[size_t(iter * cfg.batch + i) % references.size()];
            std::copy(r.data.begin(), r.data.end(), batch.data.begin() + size_t(i) * dim);
        }
        return batch;
    };

    // generator pass for this mode: plain for the baselines, blended and
    // adapted for the main mode
    auto fake_node = [&](GraphT<float>& g, const Tensor& z) {
        int w = map_latent(g, model, g.input(z));
        if (genda_mode) w = apply_adaptor(g, model, truncate_latent(g, model, w, train_beta));
        return synthesize(g, model, w);
    };
    auto critic_logit = [&](GraphT<float>& g, int x) {
        int f = disc_features(g, model, x);
        return genda_mode ? attribute_logit(g, model, f) : real_fake_logit(g, model, f);
    };

    for (long long iter = 0; iter < out.iters; ++iter) {
        const float strength =
            !images || out.iters < 2
                ? 0.f
                : float(cfg.aug_max) * float(iter) / float(out.iters - 1);

        // classifier step first: it must see the current generator before
        // the generator moves toward it
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
                g.tape.scale(g.tape.mean(g.tape.log_sigmoid(critic_logit(g, areal))), -1.0),
                g.tape.mean(g.tape.log_sigmoid(g.tape.scale(critic_logit(g, afake), -1.0))));
            out.loss_phi = g.tape.scalar(loss);
            guard(out.loss_phi, "classifier", iter);
            opt_critic.zero_grads();
            g.tape.backward(loss);
            opt_critic.step();
        }

        // generator step on fresh latents against the updated classifier
        {
            Tensor z = sample_latents<float>(streams.latent, cfg.batch, dims.latent);
            GraphT<float> g;
            g.trainable = &gen_set;
            int fake = fake_node(g, z);
            int afake =
                augment_images(g, fake, cfg.batch, dims.image_res, strength, streams.augment);
            int loss =
                g.tape.scale(g.tape.mean(g.tape.log_sigmoid(critic_logit(g, afake))), -1.0);
            out.loss_gen = g.tape.scalar(loss);
            guard(out.loss_gen, "generator", iter);
            opt_gen.zero_grads();
            g.tape.backward(loss);
            opt_gen.step();
        }

        if (callback) {
            AdaptStep info;
            info.iter = iter;
            info.samples_seen = (iter + 1) * cfg.batch;
            info.loss_phi = out.loss_phi;
            info.loss_gen = out.loss_gen;
            info.aug_strength = strength;
            callback(info, model);
        }
    }
    return out;
}

Tensor sample_adapted(AdaptResult& result, RngStream& rng, int n) {
    Tensor z = sample_latents<float>(rng, n, result.model.dims.latent);
    return generate_adapted(result.model, z, result.sample_beta);
}

}  // namespace genda
