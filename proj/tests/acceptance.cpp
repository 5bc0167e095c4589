// End-to-end acceptance suite. Each criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any criterion fails. Criteria 5-7
// share a single default-configuration training run (the expensive part);
// everything else is property-based and fast.

#include <vxr/gradcheck.hpp>
#include <vxr/io.hpp>
#include <vxr/pipeline.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace vxr;
namespace fs = std::filesystem;

namespace {

bool g_all_ok = true;

void report(int idx, const std::string& what, bool ok, const std::string& detail) {
    g_all_ok = g_all_ok && ok;
    std::cout << "criterion " << idx << " " << (ok ? "PASS" : "FAIL") << "  " << what;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

// ---- independent loss oracles (plain loops, no shared helpers) ----

double oracle_mse(const Tensor& p, const Tensor& t) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        s += d * d;
    }
    return s / (double)p.size();
}

double conv_at(const Tensor& z, std::size_t n, std::size_t c, long h, long w, const double k[3][3]) {
    const long H = (long)z.dim(2), W = (long)z.dim(3);
    double s = 0;
    for (long dh = -1; dh <= 1; ++dh)
        for (long dw = -1; dw <= 1; ++dw) {
            const long hh = std::min(std::max(h + dh, 0L), H - 1);
            const long ww = std::min(std::max(w + dw, 0L), W - 1);
            s += k[dh + 1][dw + 1] *
                 z[((n * z.dim(1) + c) * z.dim(2) + (std::size_t)hh) * z.dim(3) + (std::size_t)ww];
        }
    return s;
}

double oracle_sobel(const Tensor& p4, const Tensor& t4) {
    const double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    const double ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    const std::size_t N = p4.dim(0), C = p4.dim(1), H = p4.dim(2), W = p4.dim(3);
    double total = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                    const double gxp = conv_at(p4, n, c, (long)h, (long)w, kx);
                    const double gyp = conv_at(p4, n, c, (long)h, (long)w, ky);
                    const double gxt = conv_at(t4, n, c, (long)h, (long)w, kx);
                    const double gyt = conv_at(t4, n, c, (long)h, (long)w, ky);
                    const double sp = std::sqrt(gxp * gxp + gyp * gyp + 1e-12);
                    const double st = std::sqrt(gxt * gxt + gyt * gyt + 1e-12);
                    total += (sp - st) * (sp - st);
                }
    return total / (double)N;
}

double oracle_softclip(const Tensor& p, const Tensor& t, double tau) {
    const std::size_t N = p.dim(0), D = p.dim(1);
    auto rowdot = [&](const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
        double s = 0;
        for (std::size_t d = 0; d < D; ++d) s += a[i * D + d] * b[j * D + d];
        return s;
    };
    double loss = 0;
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<double> lt(N), lp(N);
        for (std::size_t j = 0; j < N; ++j) {
            lt[j] = rowdot(t, i, t, j) / tau;
            lp[j] = rowdot(p, i, t, j) / tau;
        }
        auto log_softmax = [&](const std::vector<double>& l, std::size_t j) {
            double mx = l[0];
            for (double v : l) mx = std::max(mx, v);
            double z = 0;
            for (double v : l) z += std::exp(v - mx);
            return l[j] - mx - std::log(z);
        };
        for (std::size_t j = 0; j < N; ++j) loss -= std::exp(log_softmax(lt, j)) * log_softmax(lp, j);
    }
    return loss;
}

Tensor normalized_rows(Rng& rng, std::size_t n, std::size_t d) {
    Tensor t = randn(rng, {n, d});
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < d; ++j) s += t[i * d + j] * t[i * d + j];
        const double inv = 1.0 / std::sqrt(s);
        for (std::size_t j = 0; j < d; ++j) t[i * d + j] *= inv;
    }
    return t;
}

double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

// ---- criteria ----

void criterion1_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cases = run_gradcheck_suite(2024, 20);
    bool ok = !cases.empty();
    double worst = 0;
    for (const auto& c : cases) {
        ok = ok && c.instances >= 20 && c.max_rel_err < 1e-4;
        worst = std::max(worst, c.max_rel_err);
    }
    const double secs = seconds_since(t0);
    ok = ok && secs < 120.0;
    report(1, "finite-difference gradient suite", ok,
           std::to_string(cases.size()) + " cases, >=20 instances each, max rel err " + fmt(worst) +
               ", " + fmt(secs) + " s");
}

void criterion2_loss_oracles() {
    Rng rng(7);
    bool ok = true;
    double worst = 0;
    for (int k = 0; k < 100; ++k) {
        const Tensor p2 = randn(rng, {4, 5}), t2 = randn(rng, {4, 5});
        worst = std::max(worst, rel_err(mse_loss(p2, t2), oracle_mse(p2, t2)));

        const Tensor p4 = randn(rng, {2, 3, 6, 6}), t4 = randn(rng, {2, 3, 6, 6});
        worst = std::max(worst, rel_err(sobel_loss(p4, t4), oracle_sobel(p4, t4)));

        const Tensor pe = normalized_rows(rng, 6, 8), te = normalized_rows(rng, 6, 8);
        const SoftClipConfig scc;
        worst = std::max(worst, rel_err(softclip_loss(pe, te, scc), oracle_softclip(pe, te, scc.temperature)));
    }
    ok = ok && worst < 1e-10;

    const Tensor one_p = normalized_rows(rng, 1, 8), one_t = normalized_rows(rng, 1, 8);
    const bool single_zero = softclip_loss(one_p, one_t, SoftClipConfig{}) == 0.0;
    ok = ok && single_zero;
    report(2, "loss values match brute-force oracles", ok,
           "100 cases each, max rel err " + fmt(worst) + ", softclip(N=1) == 0: " +
               (single_zero ? "yes" : "no"));
}

void criterion3_sampler_algebra() {
    bool ok = tau_from_strength(50, 1.0) == 0 && tau_from_strength(50, 0.02) == 49 &&
              tau_from_strength(1000, 0.75) == 250;

    // add_noise Monte-Carlo moments against the closed-form marginal.
    const NoiseSchedule sched = make_schedule(50, 1e-4, 0.02);
    const std::size_t tau = 20;
    const Tensor z = Tensor::full({3, 4, 4}, 0.7);
    Rng rng(5);
    const int reps = 10000;
    double s1 = 0, s2 = 0;
    for (int r = 0; r < reps; ++r) {
        const Tensor x = add_noise(z, tau, sched, rng);
        for (std::size_t i = 0; i < x.size(); ++i) {
            s1 += x[i];
            s2 += x[i] * x[i];
        }
    }
    const double n = (double)reps * (double)z.size();
    const double mean_expect = std::sqrt(sched.alpha_bar[tau]) * 0.7;
    const double var_expect = 1.0 - sched.alpha_bar[tau];
    const double mean_got = s1 / n;
    const double var_got = s2 / n - mean_got * mean_got;
    const bool mean_ok = std::abs(mean_got - mean_expect) < 3.0 * std::sqrt(var_expect / n);
    const bool var_ok = std::abs(var_got - var_expect) < 3.0 * var_expect * std::sqrt(2.0 / n);
    ok = ok && mean_ok && var_ok;

    // beta = 0 makes denoise_step the bitwise identity (built by hand; the
    // schedule factory rejects a zero beta).
    NoiseSchedule degenerate;
    degenerate.steps = 3;
    degenerate.beta = {0.0, 0.0, 0.0};
    degenerate.alpha = {1.0, 1.0, 1.0};
    degenerate.alpha_bar = {1.0, 1.0, 1.0};
    Rng rng2(6);
    const Tensor x0 = randn(rng2, {3, 4, 4});
    const Tensor eps = randn(rng2, {3, 4, 4});
    Tensor y = denoise_step(x0, 1, eps, degenerate, rng2);
    bool identity = true;
    for (std::size_t i = 0; i < x0.size(); ++i) identity = identity && y[i] == x0[i];
    ok = ok && identity;

    report(3, "sampler algebra (tau table, noising moments, beta=0 identity)", ok,
           "moments within 3 sigma over 10000 draws; identity bitwise: " +
               std::string(identity ? "yes" : "no"));
}

void criterion4_strength_one_identity() {
    StructuralGeneratorConfig sgc;
    sgc.voxel_dim = 20;
    sgc.hidden = 16;
    sgc.blocks = 1;
    sgc.dropout = 0.0;
    sgc.base_hw = 4;
    sgc.upsample_stages = 2;  // latent 16x16 to match a 64-pixel codec
    SemanticExtractorConfig sec;
    sec.voxel_dim = 20;
    sec.hidden = 16;
    sec.blocks = 1;
    sec.dropout = 0.0;
    sec.embed_dim = 16;
    ToyDenoiserConfig dc;
    dc.latent_hw = 16;
    dc.embed_dim = 16;
    dc.enc1_ch = 8;
    dc.enc2_ch = 16;

    StructuralGenerator sg(sgc, 41);
    SemanticExtractor se(sec, 42);
    ToyDenoiser den(dc, 43);
    const Codec codec(44, 64, 16);
    const NoiseSchedule sched = make_schedule(50, 1e-4, 0.02);
    ReconstructionConfig rc;
    rc.strength = 1.0;

    Rng rng(11);
    bool ok = true;
    for (int k = 0; k < 5; ++k) {
        const Tensor vs = randn(rng, {20}), vm = randn(rng, {20});
        Rng sampler(1000 + (std::uint64_t)k);
        const ReconstructionResult r = reconstruct(vs, vm, sg, se, den, codec, sched, rc, sampler);
        const Image direct = codec.autokl_decode(sg.forward(vs));
        ok = ok && r.tau == 0 && r.image.pixels.shape() == direct.pixels.shape();
        for (std::size_t i = 0; ok && i < direct.pixels.size(); ++i)
            ok = r.image.pixels[i] == direct.pixels[i];
    }
    report(4, "strength 1.0 reconstruction equals decoded structural prior bit-exactly", ok,
           "5 random voxel inputs, tau == 0");
}

struct TrainedStack {
    fs::path dir;
    Dataset ds;
    Codec codec;
    StructuralGenerator sg;
    SemanticExtractor se;
    ToyDenoiser den;
    double train_secs = 0;
};

TrainedStack train_default_stack(const ExperimentConfig& cfg, const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto t0 = std::chrono::steady_clock::now();

    Dataset ds = build_dataset(cfg.dataset);
    Codec codec = dataset_codec(cfg.dataset);
    const Rng root(cfg.seed);

    std::vector<Tensor> voxels_s, voxels_m, latents, e_img, e_cap;
    for (const auto& rec : ds.train) {
        const StimulusTargets t = stimulus_targets(codec, rec, cfg.dataset.image_hw);
        voxels_s.push_back(rec.v_spatial);
        voxels_m.push_back(rec.v_semantic);
        latents.push_back(t.latent);
        e_img.push_back(t.e_img);
        e_cap.push_back(t.e_cap);
    }

    StructuralGenerator sg(cfg.sg_config(), root.fork(200).seed());
    train_structural(sg, voxels_s, latents, {cfg.epochs, cfg.batch, cfg.lr, root.fork(210).seed()});
    save_structural(dir / artifacts::kStructural, sg, {{"seed", cfg.seed}});

    SemanticExtractor se(cfg.se_config(), root.fork(201).seed());
    train_semantic(se, voxels_m, e_img, e_cap, {cfg.epochs, cfg.batch, cfg.lr, root.fork(211).seed()});
    save_semantic(dir / artifacts::kSemantic, se, {{"seed", cfg.seed}});

    ToyDenoiser den(cfg.denoiser_config(), root.fork(202).seed());
    train_denoiser(den, latents, e_img, e_cap, cfg.schedule(),
                   {cfg.denoiser_steps, cfg.denoiser_batch, cfg.denoiser_lr, root.fork(212).seed()});
    save_denoiser(dir / artifacts::kDenoiser, den, {{"seed", cfg.seed}});

    return TrainedStack{dir,           std::move(ds), std::move(codec), std::move(sg),
                        std::move(se), std::move(den), seconds_since(t0)};
}

void criteria5_6_default_run(TrainedStack& s, const ExperimentConfig& cfg) {
    const NoiseSchedule sched = cfg.schedule();
    const nlohmann::json prov = {{"structural", fingerprint_file(s.dir / artifacts::kStructural)},
                                 {"semantic", fingerprint_file(s.dir / artifacts::kSemantic)},
                                 {"denoiser", fingerprint_file(s.dir / artifacts::kDenoiser)}};

    const AblationMode modes[3] = {AblationMode::Full, AblationMode::NoZ, AblationMode::OnlyZ};
    MetricReport reports[3][3];
    for (int k = 0; k < 3; ++k) {
        const std::uint64_t rseed = Rng(cfg.seed).fork(300 + (std::uint64_t)k).seed();
        for (int m = 0; m < 3; ++m) {
            const fs::path rdir =
                s.dir / ("recon_seed" + std::to_string(k)) / to_string(modes[m]);
            reconstruct_split(rdir, s.ds, s.sg, s.se, s.den, s.codec, sched,
                              recon_config_for(modes[m], cfg.strength), rseed, prov);
            reports[k][m] = evaluate_reconstructions(rdir, s.ds, s.codec);
        }
    }

    const double chance = 1.0 / (double)s.ds.test.size();
    const MetricReport& full = reports[0][0];
    const bool budget_ok = s.train_secs < 1800.0;
    const bool ok5 = budget_ok && full.pixcorr >= 0.5 && full.two_way_pct >= 80.0 &&
                     full.embedding_top1 >= 3.0 * chance;
    report(5, "default-config held-out performance", ok5,
           "train " + fmt(s.train_secs) + " s, pixcorr " + fmt(full.pixcorr) + " (>=0.5), two-way " +
               fmt(full.two_way_pct) + "% (>=80), emb top-1 " + fmt(full.embedding_top1) + " (>=" +
               fmt(3.0 * chance) + ")");

    bool ok6 = true;
    for (int k = 0; k < 3; ++k) {
        const MetricReport& f = reports[k][0];
        const MetricReport& noz = reports[k][1];
        const MetricReport& onlyz = reports[k][2];
        ok6 = ok6 && f.pixcorr > noz.pixcorr && f.ssim > noz.ssim &&
              f.embedding_top1 > onlyz.embedding_top1 &&
              onlyz.embedding_top1 <= 2.0 * chance && onlyz.embedding_top1 >= 0.5 * chance;
    }
    report(6, "ablation orderings hold on 3 sampling seeds", ok6,
           "full vs no_z pixcorr/ssim, full vs only_z embedding, only_z retrieval at chance; e.g. seed0 "
           "pixcorr " + fmt(reports[0][0].pixcorr) + " > " + fmt(reports[0][1].pixcorr) +
               ", only_z top-1 " + fmt(reports[0][2].embedding_top1));
}

void criterion7_interpret(const TrainedStack& s) {
    bool ok = true;
    double worst = 0;
    for (const bool structural : {true, false}) {
        const fs::path ckpt = s.dir / (structural ? artifacts::kStructural : artifacts::kSemantic);
        const RoiMask& mask = structural ? s.ds.roi_spatial : s.ds.roi_semantic;
        const InterpretResult r = interpret_checkpoint(ckpt, mask);
        const Tensor W = checkpoint_first_layer_weight(ckpt);
        const std::size_t rows = W.dim(0), cols = W.dim(1);
        ok = ok && r.column_norms.size() == cols && cols == mask.popcount();

        for (std::size_t c = 0; c < cols && ok; ++c) {
            double sum = 0;
            for (std::size_t h = 0; h < rows; ++h) sum += W[h * cols + c] * W[h * cols + c];
            worst = std::max(worst, rel_err(r.column_norms[c], std::sqrt(sum)));
        }
        ok = ok && worst < 1e-12;

        // The volume is the norms scattered exactly onto the mask support.
        std::size_t next = 0;
        for (std::size_t i = 0; i < r.volume.size() && ok; ++i) {
            if (mask.mask[i])
                ok = r.volume[i] == r.column_norms[next++] && r.volume[i] > 0.0;
            else
                ok = r.volume[i] == 0.0;
        }
        ok = ok && next == r.column_norms.size();
    }
    report(7, "voxel contribution maps match per-column L2 norms and the ROI support", ok,
           "both checkpoints, max rel err " + fmt(worst));
}

void criterion8_determinism() {
    ExperimentConfig c;
    c.dataset.train_size = 40;
    c.dataset.test_size = 8;
    c.dataset.v_spatial = 48;
    c.dataset.v_semantic = 48;
    c.dataset.sigma = 0.05;
    c.dataset.seed = 17;
    c.dataset.image_hw = 16;
    c.dataset.embed_dim = 16;
    c.dataset.roi_grid = {8, 8, 4};
    c.hidden = 32;
    c.blocks = 1;
    c.dropout = 0.05;
    c.epochs = 8;
    c.batch = 10;
    c.denoiser_steps = 100;
    c.denoiser_batch = 4;
    c.schedule_steps = 10;
    c.seed = 17;

    auto run = [&](const fs::path& d) {
        fs::remove_all(d);
        fs::create_directories(d);
        const Dataset ds = build_dataset(c.dataset);
        save_dataset(d / artifacts::kDatasetDir, ds);
        const Codec codec = dataset_codec(c.dataset);
        const Rng root(c.seed);

        std::vector<Tensor> voxels_s, voxels_m, latents, e_img, e_cap;
        for (const auto& rec : ds.train) {
            const StimulusTargets t = stimulus_targets(codec, rec, c.dataset.image_hw);
            voxels_s.push_back(rec.v_spatial);
            voxels_m.push_back(rec.v_semantic);
            latents.push_back(t.latent);
            e_img.push_back(t.e_img);
            e_cap.push_back(t.e_cap);
        }
        StructuralGenerator sg(c.sg_config(), root.fork(200).seed());
        train_structural(sg, voxels_s, latents, {c.epochs, c.batch, c.lr, root.fork(210).seed()});
        save_structural(d / artifacts::kStructural, sg, {{"seed", c.seed}});
        SemanticExtractor se(c.se_config(), root.fork(201).seed());
        train_semantic(se, voxels_m, e_img, e_cap, {c.epochs, c.batch, c.lr, root.fork(211).seed()});
        save_semantic(d / artifacts::kSemantic, se, {{"seed", c.seed}});
        ToyDenoiser den(c.denoiser_config(), root.fork(202).seed());
        train_denoiser(den, latents, e_img, e_cap, c.schedule(),
                       {c.denoiser_steps, c.denoiser_batch, c.denoiser_lr, root.fork(212).seed()});
        save_denoiser(d / artifacts::kDenoiser, den, {{"seed", c.seed}});

        const nlohmann::json prov = {{"structural", fingerprint_file(d / artifacts::kStructural)},
                                     {"semantic", fingerprint_file(d / artifacts::kSemantic)},
                                     {"denoiser", fingerprint_file(d / artifacts::kDenoiser)}};
        const fs::path rdir = d / artifacts::kReconDir / to_string(AblationMode::Full);
        reconstruct_split(rdir, ds, sg, se, den, codec, c.schedule(),
                          recon_config_for(AblationMode::Full, c.strength),
                          Rng(c.seed).fork(300).seed(), prov);
        const MetricReport r = evaluate_reconstructions(rdir, ds, codec);
        write_report_csv(d / "report_full.csv", r);
    };

    const fs::path a = fs::temp_directory_path() / "vxr_acceptance_rerun_a";
    const fs::path b = fs::temp_directory_path() / "vxr_acceptance_rerun_b";
    run(a);
    run(b);

    std::vector<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a));
    std::sort(rel.begin(), rel.end());

    bool ok = !rel.empty();
    std::size_t count_b = 0;
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) ++count_b;
    ok = ok && count_b == rel.size();
    for (const auto& p : rel)
        ok = ok && fs::exists(b / p) && fingerprint_file(a / p) == fingerprint_file(b / p);

    report(8, "full pipeline rerun produces byte-identical artifacts", ok,
           std::to_string(rel.size()) + " files compared across two runs");
}

}  // namespace

int main() {
    criterion1_gradients();
    criterion2_loss_oracles();
    criterion3_sampler_algebra();
    criterion4_strength_one_identity();

    const ExperimentConfig cfg;  // library defaults throughout
    TrainedStack stack = train_default_stack(cfg, fs::temp_directory_path() / "vxr_acceptance");
    criteria5_6_default_run(stack, cfg);
    criterion7_interpret(stack);

    criterion8_determinism();

    std::cout << (g_all_ok ? "acceptance: all criteria passed" : "acceptance: FAILURES above")
              << std::endl;
    return g_all_ok ? 0 : 1;
}
