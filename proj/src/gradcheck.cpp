#include "vxr/gradcheck.hpp"

#include "vxr/diffusion.hpp"
#include "vxr/losses.hpp"
#include "vxr/models.hpp"
#include "vxr/nn.hpp"

#include <algorithm>
#include <cmath>

namespace vxr {

std::vector<FdProbe> fd_check(Tensor& x, const Tensor& analytic, const std::function<double()>& loss,
                              std::size_t max_probes, Rng& rng, double step) {
    if (!x.same_shape(analytic))
        throw ShapeError("fd_check: gradient shape " + shape_str(analytic.shape()) +
                         " does not match value shape " + shape_str(x.shape()));
    const std::size_t n = x.size();
    std::vector<std::size_t> picks;
    if (max_probes >= n) {
        picks.resize(n);
        for (std::size_t i = 0; i < n; ++i) picks[i] = i;
    } else {
        // Sampling with replacement is fine here; duplicates just re-test.
        picks.resize(max_probes);
        for (auto& p : picks) p = rng.below(n);
    }
    std::vector<FdProbe> out;
    out.reserve(picks.size());
    for (std::size_t i : picks) {
        const double saved = x[i];
        x[i] = saved + step;
        const double lp = loss();
        x[i] = saved - step;
        const double lm = loss();
        x[i] = saved;
        FdProbe p;
        p.index = i;
        p.numeric = (lp - lm) / (2.0 * step);
        p.analytic = analytic[i];
        const double denom = std::max({std::fabs(p.numeric), std::fabs(p.analytic), 1e-6});
        p.rel_err = std::fabs(p.numeric - p.analytic) / denom;
        out.push_back(p);
    }
    return out;
}

double max_rel_err(const std::vector<FdProbe>& probes) {
    double worst = 0.0;
    for (const auto& p : probes) worst = std::max(worst, p.rel_err);
    return worst;
}

namespace {

void append(std::vector<FdProbe>& acc, std::vector<FdProbe> more) {
    acc.insert(acc.end(), more.begin(), more.end());
}

// Checks one layer instance: projects the output onto a fixed random
// direction (so dL/d(out) is that direction) and probes both the forward
// input and every parameter tensor.
std::vector<FdProbe> check_layer(nn::Layer& layer, Tensor& x, nn::Mode mode, std::uint64_t fwd_seed,
                                 Rng& pr, std::size_t probes_per_tensor) {
    auto fwd = [&]() {
        Rng r(fwd_seed);  // same dropout masks on every evaluation
        return layer.forward(x, mode, &r);
    };
    const Tensor out0 = fwd();
    const Tensor proj = randn(pr, out0.shape());
    auto loss = [&]() { return dot(fwd(), proj); };
    layer.zero_grad();
    fwd();  // restore the tape after the probe-free evaluations above
    Tensor gin = layer.backward(proj);
    std::vector<FdProbe> probes = fd_check(x, gin, loss, probes_per_tensor, pr);
    const auto params = layer.params();
    const auto grads = layer.grads();
    for (std::size_t i = 0; i < params.size(); ++i)
        append(probes, fd_check(*params[i], *grads[i], loss, probes_per_tensor, pr));
    return probes;
}

GradCheckCase summarize(const std::string& name, std::size_t instances,
                        const std::vector<FdProbe>& probes) {
    GradCheckCase c;
    c.name = name;
    c.instances = instances;
    c.probes = probes.size();
    c.max_rel_err = max_rel_err(probes);
    return c;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, std::size_t instances_per_case) {
    std::vector<GradCheckCase> cases;
    Rng root(seed);
    const std::size_t kProbes = 5;

    auto layer_case = [&](const std::string& name, auto make_layer, auto make_input, nn::Mode mode) {
        Rng pr = root.fork(std::hash<std::string>{}(name));
        std::vector<FdProbe> probes;
        for (std::size_t i = 0; i < instances_per_case; ++i) {
            Rng init = pr.fork(1000 + i);
            auto layer = make_layer(init, i);
            Tensor x = make_input(pr, i);
            append(probes, check_layer(*layer, x, mode, pr.next_u64(), pr, kProbes));
        }
        cases.push_back(summarize(name, instances_per_case, probes));
    };

    layer_case(
        "linear",
        [](Rng& r, std::size_t i) {
            return std::make_unique<nn::Linear>(2 + i % 5, 2 + (i + 2) % 5, r);
        },
        [](Rng& r, std::size_t i) { return randn(r, {1 + i % 3, 2 + i % 5}); }, nn::Mode::Eval);

    layer_case(
        "layernorm",
        [](Rng& r, std::size_t i) {
            auto l = std::make_unique<nn::LayerNorm>(3 + i % 5);
            l->gamma = randn(r, l->gamma.shape());
            l->beta = randn(r, l->beta.shape());
            return l;
        },
        [](Rng& r, std::size_t i) { return randn(r, {1 + i % 3, 3 + i % 5}); }, nn::Mode::Eval);

    layer_case(
        "groupnorm",
        [](Rng& r, std::size_t i) {
            const std::size_t ch = (i % 2) ? 4 : 6;
            auto l = std::make_unique<nn::GroupNorm>(ch, 2);
            l->gamma = randn(r, l->gamma.shape());
            l->beta = randn(r, l->beta.shape());
            return l;
        },
        [](Rng& r, std::size_t i) {
            const std::size_t ch = (i % 2) ? 4 : 6;
            return randn(r, {1 + i % 2, ch, 3, 3});
        },
        nn::Mode::Eval);

    layer_case(
        "silu", [](Rng&, std::size_t) { return std::make_unique<nn::SiLU>(); },
        [](Rng& r, std::size_t i) { return randn(r, {2 + i % 4, 3 + i % 5}); }, nn::Mode::Eval);

    layer_case(
        "dropout", [](Rng&, std::size_t i) { return std::make_unique<nn::Dropout>(0.1 * (double)(i % 5)); },
        [](Rng& r, std::size_t i) { return randn(r, {2, 4 + i % 4}); }, nn::Mode::Train);

    layer_case(
        "residual_mlp",
        [](Rng& r, std::size_t i) { return std::make_unique<nn::ResidualMLPBlock>(3 + i % 4, 0.2, r); },
        [](Rng& r, std::size_t i) { return randn(r, {1 + i % 3, 3 + i % 4}); }, nn::Mode::Train);

    layer_case(
        "upsample2x", [](Rng&, std::size_t) { return std::make_unique<nn::NearestUpsample2x>(); },
        [](Rng& r, std::size_t i) { return randn(r, {1, 1 + i % 3, 2 + i % 3, 2 + i % 3}); },
        nn::Mode::Eval);

    layer_case(
        "conv2d",
        [](Rng& r, std::size_t i) { return std::make_unique<nn::Conv2d>(1 + i % 3, 1 + (i + 1) % 3, r); },
        [](Rng& r, std::size_t i) { return randn(r, {1 + i % 2, 1 + i % 3, 4, 5}); }, nn::Mode::Eval);

    layer_case(
        "avgpool2x2", [](Rng&, std::size_t) { return std::make_unique<nn::AvgPool2x2>(); },
        [](Rng& r, std::size_t i) { return randn(r, {1 + i % 2, 1 + i % 3, 4, 6}); }, nn::Mode::Eval);

    layer_case(
        "l2norm_rows", [](Rng&, std::size_t) { return std::make_unique<nn::L2NormalizeRows>(); },
        [](Rng& r, std::size_t i) { return randn(r, {2 + i % 3, 3 + i % 5}); }, nn::Mode::Eval);

    layer_case(
        "sequential",
        [](Rng& r, std::size_t i) {
            auto s = std::make_unique<nn::Sequential>();
            s->layers.push_back(std::make_unique<nn::Linear>(3 + i % 3, 4, r));
            s->layers.push_back(std::make_unique<nn::SiLU>());
            s->layers.push_back(std::make_unique<nn::Linear>(4, 2, r));
            return s;
        },
        [](Rng& r, std::size_t i) { return randn(r, {2, 3 + i % 3}); }, nn::Mode::Eval);

    // Structural generator, toy config (latent 3x4x4), train-mode dropout.
    {
        Rng pr = root.fork(901);
        std::vector<FdProbe> probes;
        for (std::size_t i = 0; i < instances_per_case; ++i) {
            StructuralGeneratorConfig cfg;
            cfg.voxel_dim = 6 + i % 4;
            cfg.hidden = 8;
            cfg.blocks = 1;
            cfg.dropout = 0.1;
            cfg.base_hw = 2;
            cfg.upsample_stages = 1;
            StructuralGenerator sg(cfg, pr.next_u64());
            Tensor v = randn(pr, {2, cfg.voxel_dim});
            const std::uint64_t fwd_seed = pr.next_u64();
            auto fwd = [&]() {
                Rng r(fwd_seed);
                return sg.forward_batch(v, nn::Mode::Train, &r);
            };
            const Tensor proj = randn(pr, fwd().shape());
            auto loss = [&]() { return dot(fwd(), proj); };
            sg.zero_grads();
            fwd();
            Tensor gin = sg.backward_batch(proj);
            append(probes, fd_check(v, gin, loss, kProbes, pr));
            const auto params = sg.params();
            const auto grads = sg.grads();
            for (std::size_t p = 0; p < params.size(); p += 3)
                append(probes, fd_check(*params[p], *grads[p], loss, 2, pr));
        }
        cases.push_back(summarize("structural_generator", instances_per_case, probes));
    }

    // Semantic extractor, toy config.
    {
        Rng pr = root.fork(902);
        std::vector<FdProbe> probes;
        for (std::size_t i = 0; i < instances_per_case; ++i) {
            SemanticExtractorConfig cfg;
            cfg.voxel_dim = 6 + i % 4;
            cfg.hidden = 8;
            cfg.blocks = 1;
            cfg.dropout = 0.1;
            cfg.embed_dim = 5;
            SemanticExtractor se(cfg, pr.next_u64());
            Tensor v = randn(pr, {2, cfg.voxel_dim});
            const std::uint64_t fwd_seed = pr.next_u64();
            auto fwd = [&]() {
                Rng r(fwd_seed);
                return se.forward_batch(v, nn::Mode::Train, &r);
            };
            const auto out0 = fwd();
            const Tensor proj_img = randn(pr, out0.e_img.shape());
            const Tensor proj_cap = randn(pr, out0.e_cap.shape());
            auto loss = [&]() {
                const auto o = fwd();
                return dot(o.e_img, proj_img) + dot(o.e_cap, proj_cap);
            };
            se.zero_grads();
            fwd();
            Tensor gin = se.backward_batch(proj_img, proj_cap);
            append(probes, fd_check(v, gin, loss, kProbes, pr));
            const auto params = se.params();
            const auto grads = se.grads();
            for (std::size_t p = 0; p < params.size(); p += 3)
                append(probes, fd_check(*params[p], *grads[p], loss, 2, pr));
        }
        cases.push_back(summarize("semantic_extractor", instances_per_case, probes));
    }

    // Toy denoiser on a 3x4x4 latent, cycling through conditioning modes.
    {
        Rng pr = root.fork(903);
        const CondMode modes[4] = {CondMode::Both, CondMode::ImageOnly, CondMode::CaptionOnly,
                                   CondMode::None};
        std::vector<FdProbe> probes;
        for (std::size_t i = 0; i < instances_per_case; ++i) {
            ToyDenoiserConfig cfg;
            cfg.latent_ch = 3;
            cfg.latent_hw = 4;
            cfg.embed_dim = 6;
            cfg.enc1_ch = 4;
            cfg.enc2_ch = 4;
            ToyDenoiser den(cfg, pr.next_u64());
            Tensor z = randn(pr, {cfg.latent_ch, cfg.latent_hw, cfg.latent_hw});
            SemanticEmbeddings cond{randn(pr, {cfg.embed_dim}), randn(pr, {cfg.embed_dim})};
            const std::size_t t = pr.below(10);
            const CondMode mode = modes[i % 4];
            auto fwd = [&]() { return den.predict(z, t, cond, mode); };
            const Tensor proj = randn(pr, fwd().shape());
            auto loss = [&]() { return dot(fwd(), proj); };
            den.zero_grads();
            fwd();
            Tensor gz = den.backward(proj);
            append(probes, fd_check(z, gz, loss, kProbes, pr));
            const auto params = den.params();
            const auto grads = den.grads();
            for (std::size_t p = 0; p < params.size(); ++p)
                append(probes, fd_check(*params[p], *grads[p], loss, 2, pr));
        }
        cases.push_back(summarize("toy_denoiser", instances_per_case, probes));
    }

    // Loss gradients: probe the prediction argument directly.
    auto loss_case = [&](const std::string& name, auto make_pair, auto loss_fn, auto grad_fn) {
        Rng pr = root.fork(std::hash<std::string>{}(name) ^ 0xABCD);
        std::vector<FdProbe> probes;
        for (std::size_t i = 0; i < instances_per_case; ++i) {
            auto pair = make_pair(pr, i);
            Tensor& pred = pair.first;
            const Tensor& target = pair.second;
            auto loss = [&]() { return loss_fn(pred, target); };
            Tensor g = grad_fn(pred, target);
            append(probes, fd_check(pred, g, loss, kProbes, pr));
        }
        cases.push_back(summarize(name, instances_per_case, probes));
    };

    auto img_pair = [](Rng& r, std::size_t i) {
        Shape s = {1 + i % 2, 2, 4, 4};
        return std::pair<Tensor, Tensor>(randn(r, s), randn(r, s));
    };
    // Row-normalized, matching the softclip contract; unnormalized draws
    // saturate the tempered softmax and drown finite differences in
    // truncation error.
    auto emb_pair = [](Rng& r, std::size_t i) {
        Shape s = {2 + i % 3, 4 + i % 4};
        auto normalize_rows = [](Tensor t) {
            for (std::size_t row = 0; row < t.dim(0); ++row) {
                double acc = 0.0;
                for (std::size_t c = 0; c < t.dim(1); ++c) acc += t.at2(row, c) * t.at2(row, c);
                const double inv = 1.0 / std::sqrt(acc);
                for (std::size_t c = 0; c < t.dim(1); ++c) t.at2(row, c) *= inv;
            }
            return t;
        };
        return std::pair<Tensor, Tensor>(normalize_rows(randn(r, s)), normalize_rows(randn(r, s)));
    };

    loss_case(
        "mse_loss", img_pair, [](const Tensor& p, const Tensor& t) { return mse_loss(p, t); },
        [](const Tensor& p, const Tensor& t) { return mse_loss_grad(p, t); });
    loss_case(
        "sobel_loss", img_pair, [](const Tensor& p, const Tensor& t) { return sobel_loss(p, t); },
        [](const Tensor& p, const Tensor& t) { return sobel_loss_grad(p, t); });
    loss_case(
        "structural_loss", img_pair,
        [](const Tensor& p, const Tensor& t) { return structural_loss(p, t); },
        [](const Tensor& p, const Tensor& t) { return structural_loss_grad(p, t); });
    loss_case(
        "softclip_loss", emb_pair,
        [](const Tensor& p, const Tensor& t) { return softclip_loss(p, t, SoftClipConfig{}); },
        [](const Tensor& p, const Tensor& t) { return softclip_loss_grad(p, t, SoftClipConfig{}); });

    return cases;
}

}  // namespace vxr
