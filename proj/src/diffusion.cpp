#include "vxr/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace vxr {

using nn::Mode;

NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end) {
    if (steps < 1) throw ValueError("schedule needs at least one step");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ValueError("schedule requires 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    double running = 1.0;
    for (std::size_t t = 0; t < steps; ++t) {
        const double frac = steps == 1 ? 0.0 : (double)t / (double)(steps - 1);
        s.beta[t] = beta_start + (beta_end - beta_start) * frac;
        s.alpha[t] = 1.0 - s.beta[t];
        running *= s.alpha[t];
        s.alpha_bar[t] = running;
    }
    return s;
}

std::size_t tau_from_strength(std::size_t steps, double strength) {
    if (!(strength > 0.0 && strength <= 1.0)) throw ValueError("strength must be in (0,1]");
    const std::size_t consumed = (std::size_t)std::floor((double)steps * strength);
    const std::size_t tau = steps - consumed;
    return std::min(tau, steps - 1);  // only binds when s < 1/N
}

Tensor add_noise(const Tensor& z_prior, std::size_t tau, const NoiseSchedule& sched, Rng& rng) {
    if (tau >= sched.steps) throw ValueError("add_noise: tau out of range");
    const double ab = sched.alpha_bar[tau];
    const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
    Tensor z(z_prior.shape());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = cs * z_prior[i] + cn * rng.normal();
    return z;
}

Tensor denoise_step(const Tensor& z_t, std::size_t t, const Tensor& eps_hat, const NoiseSchedule& sched,
                    Rng& rng) {
    if (t >= sched.steps) throw ValueError("denoise_step: t out of range");
    if (!z_t.same_shape(eps_hat))
        throw ShapeError("denoise_step: latent " + shape_str(z_t.shape()) + " vs noise estimate " +
                         shape_str(eps_hat.shape()));
    const double beta = sched.beta[t];
    if (beta == 0.0) return z_t;  // exact identity
    const double ab = sched.alpha_bar[t];
    if (ab >= 1.0) throw ValueError("denoise_step: alpha_bar = 1 with beta > 0");
    const double coef = beta / std::sqrt(1.0 - ab);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[t]);
    const double noise_scale = t > 0 ? std::sqrt(beta) : 0.0;
    Tensor out(z_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = inv_sqrt_alpha * (z_t[i] - coef * eps_hat[i]);
        if (noise_scale > 0.0) out[i] += noise_scale * rng.normal();
    }
    return out;
}

CondMode cond_mode_from_string(const std::string& s) {
    if (s == "both") return CondMode::Both;
    if (s == "image-only") return CondMode::ImageOnly;
    if (s == "caption-only") return CondMode::CaptionOnly;
    if (s == "none") return CondMode::None;
    throw ValueError("unknown conditioning mode: " + s);
}

std::string to_string(CondMode m) {
    switch (m) {
        case CondMode::Both: return "both";
        case CondMode::ImageOnly: return "image-only";
        case CondMode::CaptionOnly: return "caption-only";
        case CondMode::None: return "none";
    }
    return "?";
}

// ------------------------------------------------------------ ToyDenoiser

namespace {

// Fixed sinusoidal timestep features of the given even dimension.
Tensor sinusoidal_embedding(std::size_t t, std::size_t dim) {
    Tensor e({1, dim});
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * (double)i / (double)half);
        e.at2(0, 2 * i) = std::sin((double)t * freq);
        e.at2(0, 2 * i + 1) = std::cos((double)t * freq);
    }
    return e;
}

}  // namespace

namespace {
nn::Conv2d seeded_conv(std::size_t in_ch, std::size_t out_ch, std::uint64_t seed, std::uint64_t idx) {
    Rng rng = Rng(seed).fork(idx);
    return nn::Conv2d(in_ch, out_ch, rng);
}
nn::Linear seeded_linear(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed, std::uint64_t idx) {
    Rng rng = Rng(seed).fork(idx);
    return nn::Linear(in_dim, out_dim, rng);
}
}  // namespace

ToyDenoiser::ToyDenoiser(ToyDenoiserConfig cfg, std::uint64_t init_seed)
    : cfg_(cfg),
      enc1_(seeded_conv(cfg.latent_ch, cfg.enc1_ch, init_seed, 0)),
      enc2_(seeded_conv(cfg.enc1_ch, cfg.enc2_ch, init_seed, 1)),
      dec2_(seeded_conv(cfg.enc2_ch, cfg.enc1_ch, init_seed, 2)),
      dec1_(seeded_conv(cfg.enc1_ch, cfg.latent_ch, init_seed, 3)),
      time_proj_(seeded_linear(cfg.enc2_ch, cfg.enc2_ch, init_seed, 4)) {
    Rng rng = Rng(init_seed).fork(5);
    const std::size_t dm = cfg.enc2_ch, D = cfg.embed_dim;
    Wq_ = rand_uniform(rng, {dm, dm}, -1.0 / std::sqrt((double)dm), 1.0 / std::sqrt((double)dm));
    Wk_ = rand_uniform(rng, {dm, D}, -1.0 / std::sqrt((double)D), 1.0 / std::sqrt((double)D));
    Wv_ = rand_uniform(rng, {dm, D}, -1.0 / std::sqrt((double)D), 1.0 / std::sqrt((double)D));
    Wo_ = rand_uniform(rng, {dm, dm}, -1.0 / std::sqrt((double)dm), 1.0 / std::sqrt((double)dm));
    null_img_ = rand_uniform(rng, {D}, -0.1, 0.1);
    null_cap_ = rand_uniform(rng, {D}, -0.1, 0.1);
    gWq_ = Tensor(Wq_.shape());
    gWk_ = Tensor(Wk_.shape());
    gWv_ = Tensor(Wv_.shape());
    gWo_ = Tensor(Wo_.shape());
    gnull_img_ = Tensor(null_img_.shape());
    gnull_cap_ = Tensor(null_cap_.shape());
}

Tensor ToyDenoiser::attention_forward(const Tensor& tokens) {
    const std::size_t M = tokens.dim(0), dm = tokens.dim(1), D = cfg_.embed_dim;
    cache_.tokens = tokens;
    // q_i = Wq x_i; k_j = Wk c_j; v_j = Wv c_j.
    Tensor q({M, dm});
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t r = 0; r < dm; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < dm; ++c) acc += Wq_.at2(r, c) * tokens.at2(i, c);
            q.at2(i, r) = acc;
        }
    Tensor k({2, dm}), v({2, dm});
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t r = 0; r < dm; ++r) {
            double ak = 0.0, av = 0.0;
            for (std::size_t c = 0; c < D; ++c) {
                ak += Wk_.at2(r, c) * cache_.cond.at2(j, c);
                av += Wv_.at2(r, c) * cache_.cond.at2(j, c);
            }
            k.at2(j, r) = ak;
            v.at2(j, r) = av;
        }
    cache_.q = q;
    cache_.k = k;
    cache_.v = v;
    const double scl = 1.0 / std::sqrt((double)dm);
    Tensor attn({M, 2});
    Tensor out({M, dm});
    for (std::size_t i = 0; i < M; ++i) {
        double l0 = 0.0, l1 = 0.0;
        for (std::size_t r = 0; r < dm; ++r) {
            l0 += q.at2(i, r) * k.at2(0, r);
            l1 += q.at2(i, r) * k.at2(1, r);
        }
        l0 *= scl;
        l1 *= scl;
        const double mx = std::max(l0, l1);
        const double e0 = std::exp(l0 - mx), e1 = std::exp(l1 - mx);
        const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
        attn.at2(i, 0) = a0;
        attn.at2(i, 1) = a1;
        for (std::size_t r = 0; r < dm; ++r) out.at2(i, r) = a0 * v.at2(0, r) + a1 * v.at2(1, r);
    }
    cache_.attn = attn;
    cache_.attn_out = out;
    // y_i = x_i + Wo out_i.
    Tensor y({M, dm});
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t r = 0; r < dm; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < dm; ++c) acc += Wo_.at2(r, c) * out.at2(i, c);
            y.at2(i, r) = tokens.at2(i, r) + acc;
        }
    return y;
}

Tensor ToyDenoiser::attention_backward(const Tensor& grad_tokens) {
    const std::size_t M = grad_tokens.dim(0), dm = grad_tokens.dim(1), D = cfg_.embed_dim;
    const double scl = 1.0 / std::sqrt((double)dm);
    Tensor gx = grad_tokens;  // residual path
    Tensor gout({M, dm});     // grad w.r.t. pre-Wo attention output
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t c = 0; c < dm; ++c) {
            double acc = 0.0;
            for (std::size_t r = 0; r < dm; ++r) {
                acc += Wo_.at2(r, c) * grad_tokens.at2(i, r);
                gWo_.at2(r, c) += grad_tokens.at2(i, r) * cache_.attn_out.at2(i, c);
            }
            gout.at2(i, c) = acc;
        }
    Tensor gq({M, dm}), gk({2, dm}), gv({2, dm});
    for (std::size_t i = 0; i < M; ++i) {
        const double a0 = cache_.attn.at2(i, 0), a1 = cache_.attn.at2(i, 1);
        double gdot0 = 0.0, gdot1 = 0.0;
        for (std::size_t r = 0; r < dm; ++r) {
            const double g = gout.at2(i, r);
            gv.at2(0, r) += g * a0;
            gv.at2(1, r) += g * a1;
            gdot0 += g * cache_.v.at2(0, r);
            gdot1 += g * cache_.v.at2(1, r);
        }
        // softmax backward over the two logits
        const double gl0 = a0 * (gdot0 - (a0 * gdot0 + a1 * gdot1));
        const double gl1 = a1 * (gdot1 - (a0 * gdot0 + a1 * gdot1));
        for (std::size_t r = 0; r < dm; ++r) {
            gq.at2(i, r) += scl * (gl0 * cache_.k.at2(0, r) + gl1 * cache_.k.at2(1, r));
            gk.at2(0, r) += scl * gl0 * cache_.q.at2(i, r);
            gk.at2(1, r) += scl * gl1 * cache_.q.at2(i, r);
        }
    }
    // Back through q = Wq x, k = Wk c, v = Wv c.
    Tensor gcond({2, D});
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t r = 0; r < dm; ++r) {
            const double g = gq.at2(i, r);
            for (std::size_t c = 0; c < dm; ++c) {
                gWq_.at2(r, c) += g * cache_.tokens.at2(i, c);
                gx.at2(i, c) += g * Wq_.at2(r, c);
            }
        }
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t r = 0; r < dm; ++r) {
            const double gkj = gk.at2(j, r), gvj = gv.at2(j, r);
            for (std::size_t c = 0; c < D; ++c) {
                gWk_.at2(r, c) += gkj * cache_.cond.at2(j, c);
                gWv_.at2(r, c) += gvj * cache_.cond.at2(j, c);
                gcond.at2(j, c) += gkj * Wk_.at2(r, c) + gvj * Wv_.at2(r, c);
            }
        }
    if (cache_.null_used[0])
        for (std::size_t c = 0; c < D; ++c) gnull_img_[c] += gcond.at2(0, c);
    if (cache_.null_used[1])
        for (std::size_t c = 0; c < D; ++c) gnull_cap_[c] += gcond.at2(1, c);

    return gx;
}

Tensor ToyDenoiser::predict(const Tensor& z, std::size_t t, const SemanticEmbeddings& cond, CondMode mode) {
    if (z.rank() != 3 || z.dim(0) != cfg_.latent_ch)
        throw ShapeError("denoiser: latent must be [C,h,w], got " + shape_str(z.shape()));
    const std::size_t hw = z.dim(1);
    if (z.dim(2) != hw || hw % 2 != 0) throw ShapeError("denoiser: latent spatial dims must be even/square");

    // Condition tokens with null substitution per mode.
    const bool use_img = (mode == CondMode::Both || mode == CondMode::ImageOnly);
    const bool use_cap = (mode == CondMode::Both || mode == CondMode::CaptionOnly);
    Tensor c({2, cfg_.embed_dim});
    const Tensor& ci = use_img ? cond.e_img : null_img_;
    const Tensor& cc = use_cap ? cond.e_cap : null_cap_;
    if (ci.size() != cfg_.embed_dim || cc.size() != cfg_.embed_dim)
        throw ShapeError("denoiser: condition embedding dim mismatch");
    for (std::size_t d = 0; d < cfg_.embed_dim; ++d) {
        c.at2(0, d) = ci[d];
        c.at2(1, d) = cc[d];
    }
    cache_.cond = c;
    cache_.null_used[0] = !use_img;
    cache_.null_used[1] = !use_cap;

    Tensor h = z.reshaped({1, cfg_.latent_ch, hw, hw});
    h = act1_.forward(enc1_.forward(h, Mode::Eval, nullptr), Mode::Eval, nullptr);
    cache_.enc1_out = h;
    h = pool_.forward(h, Mode::Eval, nullptr);
    h = act2_.forward(enc2_.forward(h, Mode::Eval, nullptr), Mode::Eval, nullptr);

    // Timestep conditioning, broadcast per channel.
    const Tensor temb = time_proj_.forward(sinusoidal_embedding(t, cfg_.enc2_ch), Mode::Eval, nullptr);
    const std::size_t bh = hw / 2, C2 = cfg_.enc2_ch;
    for (std::size_t ch = 0; ch < C2; ++ch)
        for (std::size_t i = 0; i < bh * bh; ++i) h[ch * bh * bh + i] += temb.at2(0, ch);

    // Cross-attention over bottleneck tokens.
    const std::size_t M = bh * bh;
    Tensor tokens({M, C2});
    for (std::size_t ch = 0; ch < C2; ++ch)
        for (std::size_t m = 0; m < M; ++m) tokens.at2(m, ch) = h[ch * M + m];
    Tensor y = attention_forward(tokens);
    Tensor h2({1, C2, bh, bh});
    for (std::size_t ch = 0; ch < C2; ++ch)
        for (std::size_t m = 0; m < M; ++m) h2[ch * M + m] = y.at2(m, ch);

    h2 = act3_.forward(dec2_.forward(h2, Mode::Eval, nullptr), Mode::Eval, nullptr);
    h2 = up_.forward(h2, Mode::Eval, nullptr);
    h2 = add(h2, cache_.enc1_out);  // skip connection
    h2 = dec1_.forward(h2, Mode::Eval, nullptr);
    return h2.reshaped({cfg_.latent_ch, hw, hw});
}

Tensor ToyDenoiser::backward(const Tensor& grad_out) {
    const std::size_t hw = grad_out.dim(1), C2 = cfg_.enc2_ch, bh = hw / 2, M = bh * bh;
    Tensor g = dec1_.backward(grad_out.reshaped({1, cfg_.latent_ch, hw, hw}));
    const Tensor g_skip = g;  // flows to enc1 activation through the skip add
    g = up_.backward(g);
    g = dec2_.backward(act3_.backward(g));
    // through attention
    Tensor gy({M, C2});
    for (std::size_t ch = 0; ch < C2; ++ch)
        for (std::size_t m = 0; m < M; ++m) gy.at2(m, ch) = g[ch * M + m];
    Tensor gtokens = attention_backward(gy);
    Tensor gh({1, C2, bh, bh});
    for (std::size_t ch = 0; ch < C2; ++ch)
        for (std::size_t m = 0; m < M; ++m) gh[ch * M + m] = gtokens.at2(m, ch);
    // timestep projection grads (per-channel sums)
    Tensor gtemb({1, C2});
    for (std::size_t ch = 0; ch < C2; ++ch) {
        double acc = 0.0;
        for (std::size_t i = 0; i < bh * bh; ++i) acc += gh[ch * bh * bh + i];
        gtemb.at2(0, ch) = acc;
    }
    time_proj_.backward(gtemb);
    Tensor gz = enc1_.backward(act1_.backward(add(pool_.backward(enc2_.backward(act2_.backward(gh))), g_skip)));
    return gz.reshaped({cfg_.latent_ch, hw, hw});
}

std::vector<Tensor*> ToyDenoiser::params() {
    return {&enc1_.W, &enc1_.b, &enc2_.W, &enc2_.b, &dec2_.W, &dec2_.b, &dec1_.W, &dec1_.b,
            &time_proj_.W, &time_proj_.b, &Wq_, &Wk_, &Wv_, &Wo_, &null_img_, &null_cap_};
}

std::vector<Tensor*> ToyDenoiser::grads() {
    return {&enc1_.gW, &enc1_.gb, &enc2_.gW, &enc2_.gb, &dec2_.gW, &dec2_.gb, &dec1_.gW, &dec1_.gb,
            &time_proj_.gW, &time_proj_.gb, &gWq_, &gWk_, &gWv_, &gWo_, &gnull_img_, &gnull_cap_};
}

void ToyDenoiser::zero_grads() {
    for (Tensor* g : grads()) std::fill(g->data().begin(), g->data().end(), 0.0);
}

// -------------------------------------------------------- Denoiser train

DenoiserTrainLog train_denoiser(ToyDenoiser& model, const std::vector<Tensor>& latents,
                                const std::vector<Tensor>& e_img, const std::vector<Tensor>& e_cap,
                                const NoiseSchedule& sched, const DenoiserTrainConfig& tc) {
    if (latents.empty()) throw ShapeError("train_denoiser: empty dataset");
    Rng rng(tc.seed);
    nn::Adam opt;
    opt.lr = tc.lr;
    opt.attach(model.params());
    DenoiserTrainLog log;
    double window = 0.0;
    std::size_t window_n = 0;
    for (std::size_t step = 0; step < tc.steps; ++step) {
        model.zero_grads();
        double batch_loss = 0.0;
        for (std::size_t b = 0; b < tc.batch; ++b) {
            const std::size_t i = (std::size_t)rng.below(latents.size());
            // Half the samples draw t uniformly; the other half concentrate
            // on the low-noise quarter of the schedule, which is the only
            // regime the sampler visits at moderate-to-high strength values.
            const std::size_t low_range = std::max<std::size_t>(1, sched.steps / 4);
            const std::size_t t = (rng.below(2) == 0) ? (std::size_t)rng.below(sched.steps)
                                                      : (std::size_t)rng.below(low_range);
            const Tensor& z0 = latents[i];
            const double ab = sched.alpha_bar[t];
            const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
            Tensor eps(z0.shape()), zt(z0.shape());
            for (std::size_t k = 0; k < z0.size(); ++k) {
                eps[k] = rng.normal();
                zt[k] = cs * z0[k] + cn * eps[k];
            }
            const SemanticEmbeddings cond{e_img[i], e_cap[i]};
            const Tensor pred = model.predict(zt, t, cond, CondMode::Both);
            const double loss = mse_loss(pred, eps);
            if (!std::isfinite(loss)) throw ValueError("train_denoiser aborted: non-finite loss");
            batch_loss += loss;
            Tensor grad = mse_loss_grad(pred, eps);
            for (double& v : grad.data()) v /= (double)tc.batch;
            model.backward(grad);
        }
        opt.step(model.params(), model.grads());
        batch_loss /= (double)tc.batch;
        if (step == 0) log.initial = batch_loss;
        window += batch_loss;
        ++window_n;
        if ((step + 1) % 50 == 0 || step + 1 == tc.steps) {
            log.loss.push_back(window / (double)window_n);
            window = 0.0;
            window_n = 0;
        }
        log.final_loss = batch_loss;
    }
    return log;
}

double denoiser_eval_loss(ToyDenoiser& model, const std::vector<Tensor>& latents,
                          const std::vector<Tensor>& e_img, const std::vector<Tensor>& e_cap,
                          const NoiseSchedule& sched, std::uint64_t seed) {
    if (latents.empty()) throw ShapeError("denoiser_eval_loss: empty dataset");
    Rng rng(seed);
    double total = 0.0;
    for (std::size_t i = 0; i < latents.size(); ++i) {
        const std::size_t t = (std::size_t)rng.below(sched.steps);
        const double ab = sched.alpha_bar[t];
        const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
        const Tensor& z0 = latents[i];
        Tensor eps(z0.shape()), zt(z0.shape());
        for (std::size_t k = 0; k < z0.size(); ++k) {
            eps[k] = rng.normal();
            zt[k] = cs * z0[k] + cn * eps[k];
        }
        const SemanticEmbeddings cond{e_img[i], e_cap[i]};
        total += mse_loss(model.predict(zt, t, cond, CondMode::Both), eps);
    }
    return total / (double)latents.size();
}

// ------------------------------------------------------------ Checkpoint

void save_denoiser(const std::filesystem::path& path, const ToyDenoiser& model, const nlohmann::json& extra) {
    auto& m = const_cast<ToyDenoiser&>(model);
    const auto& c = model.config();
    nlohmann::json meta = extra.is_null() ? nlohmann::json::object() : extra;
    meta["model"] = "denoiser";
    meta["config"] = {{"latent_ch", c.latent_ch}, {"latent_hw", c.latent_hw},
                      {"embed_dim", c.embed_dim}, {"enc1_ch", c.enc1_ch},
                      {"enc2_ch", c.enc2_ch}};
    std::vector<std::pair<std::string, const Tensor*>> named;
    auto ps = m.params();
    for (std::size_t i = 0; i < ps.size(); ++i) named.emplace_back("p" + std::to_string(i), ps[i]);
    nn::save_checkpoint(path, meta, named);
}

ToyDenoiser load_denoiser(const std::filesystem::path& path) {
    auto [meta, tensors] = nn::load_checkpoint(path);
    if (meta.value("model", "") != "denoiser")
        throw std::runtime_error("not a denoiser checkpoint: " + path.string());
    const auto& c = meta.at("config");
    ToyDenoiserConfig cfg;
    cfg.latent_ch = c.at("latent_ch");
    cfg.latent_hw = c.at("latent_hw");
    cfg.embed_dim = c.at("embed_dim");
    cfg.enc1_ch = c.at("enc1_ch");
    cfg.enc2_ch = c.at("enc2_ch");
    ToyDenoiser model(cfg, 0);
    auto ps = model.params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const Tensor& src = tensors.at("p" + std::to_string(i));
        if (!src.same_shape(*ps[i])) throw ShapeError("denoiser checkpoint parameter shape mismatch");
        *ps[i] = src;
    }
    return model;
}

// ------------------------------------------------------------ Reconstruct

ReconstructionResult reconstruct(const Tensor& v_spatial, const Tensor& v_semantic,
                                 StructuralGenerator& sg, SemanticExtractor& se, ToyDenoiser& denoiser,
                                 const Codec& codec, const NoiseSchedule& sched,
                                 const ReconstructionConfig& cfg, Rng& rng) {
    ReconstructionResult res;
    res.prior = sg.forward(v_spatial);
    res.embeddings = se.forward(v_semantic);
    res.tau = tau_from_strength(sched.steps, cfg.strength);

    if (res.tau == 0) {
        // strength 1.0: zero denoising iterations, pure structural decode.
        res.image = codec.autokl_decode(res.prior);
        return res;
    }

    Tensor z = cfg.init_mode == InitMode::Gaussian ? randn(rng, res.prior.z.shape())
                                                   : add_noise(res.prior.z, res.tau, sched, rng);
    for (std::size_t t = res.tau; t-- > 0;) {
        const Tensor eps_hat = denoiser.predict(z, t, res.embeddings, cfg.cond_mode);
        z = denoise_step(z, t, eps_hat, sched, rng);
    }
    res.image = codec.autokl_decode({std::move(z)});
    return res;
}

}  // namespace vxr
