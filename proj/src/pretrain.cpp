#include "genda/pretrain.hpp"

#include <string>

#include "genda/errors.hpp"

namespace genda {

namespace {

void guard(double loss, const char* which, long long iter) {
    if (!(loss < 100.0))
        throw DivergenceError(std::string(which) + " loss " + std::to_string(loss) +
                              " at iteration " + std::to_string(iter));
}

}  // namespace

PretrainResult pretrain(const PretrainConfig& cfg, uint64_t seed,
                        const PretrainCallback& callback) {
    Domain domain = domain_by_name(cfg.domain);
    apply_overrides(domain, cfg.domain_overrides);

    Dims dims = cfg.dims;
    if (domain.family == Domain::Family::shapes) {
        dims.image_res = domain.shapes.res;
        dims.out_dim = 0;
    } else {
        dims.out_dim = domain.output_dim();
    }

    Streams streams(seed);
    Model model = init_model(dims, streams.init);

    std::vector<Tensor*> g_params, d_params;
    std::unordered_set<const void*> g_set, d_set;
    for (auto& np : named_params(model)) {
        if (np.name.rfind("mapping.", 0) == 0 || np.name.rfind("syn.", 0) == 0) {
            g_params.push_back(np.tensor);
            g_set.insert(np.tensor);
        } else if (np.name.rfind("disc.", 0) == 0 || np.name.rfind("head.", 0) == 0) {
            d_params.push_back(np.tensor);
            d_set.insert(np.tensor);
        }
        // adaptor and attribute classifier wait for adaptation
    }
    AdamConfig ac;
    ac.lr = cfg.lr;
    AdamOpt<float> opt_g(g_params, ac), opt_d(d_params, ac);

    PretrainResult out;
    out.domain = domain;
    out.iters = cfg.budget / cfg.batch;
    const float decay = float(cfg.w_avg_decay);

    for (long long iter = 0; iter < out.iters; ++iter) {
        // discriminator on a fresh real batch against current fakes
        Tensor x = sample_real_batch(domain, streams.data, cfg.batch);
        Tensor z = sample_latents<float>(streams.latent, cfg.batch, dims.latent);
        {
            GraphT<float> g;
            g.trainable = &d_set;
            int fake = synthesize(g, model, map_latent(g, model, g.input(z)));
            int d_real = real_fake_logit(g, model, disc_features(g, model, g.input(x)));
            int d_fake = real_fake_logit(g, model, disc_features(g, model, fake));
            int loss = g.tape.sub(
                g.tape.scale(g.tape.mean(g.tape.log_sigmoid(d_real)), -1.0),
                g.tape.mean(g.tape.log_sigmoid(g.tape.scale(d_fake, -1.0))));
            out.loss_d = g.tape.scalar(loss);
            guard(out.loss_d, "discriminator", iter);
            opt_d.zero_grads();
            g.tape.backward(loss);
            opt_d.step();
        }

        // generator on its own latent batch
        Tensor z2 = sample_latents<float>(streams.latent, cfg.batch, dims.latent);
        std::vector<float> w_mean(size_t(dims.latent), 0.f);
        {
            GraphT<float> g;
            g.trainable = &g_set;
            int w = map_latent(g, model, g.input(z2));
            int fake = synthesize(g, model, w);
            int d_fake = real_fake_logit(g, model, disc_features(g, model, fake));
            int loss = g.tape.scale(g.tape.mean(g.tape.log_sigmoid(d_fake)), -1.0);
            out.loss_g = g.tape.scalar(loss);
            guard(out.loss_g, "generator", iter);

            const auto& wv = g.tape.value(w);
            for (int b = 0; b < cfg.batch; ++b)
                for (int c = 0; c < dims.latent; ++c)
                    w_mean[size_t(c)] += wv[size_t(b) * dims.latent + c] / float(cfg.batch);

            opt_g.zero_grads();
            g.tape.backward(loss);
            opt_g.step();
        }

        for (int c = 0; c < dims.latent; ++c)
            model.w_avg.data[size_t(c)] =
                decay * model.w_avg.data[size_t(c)] + (1.f - decay) * w_mean[size_t(c)];

        if (callback) {
            PretrainStep info;
            info.iter = iter;
            info.samples_seen = (iter + 1) * cfg.batch;
            info.loss_d = out.loss_d;
            info.loss_g = out.loss_g;
            info.w_mean = w_mean;
            callback(info, model);
        }
    }

    out.model = std::move(model);
    return out;
}

}  // namespace genda
