#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vxr/diffusion.hpp>
#include <vxr/rng.hpp>

#include <cmath>
#include <filesystem>

using namespace vxr;
namespace fs = std::filesystem;

namespace {

ToyDenoiserConfig tiny_denoiser() {
    ToyDenoiserConfig c;
    c.latent_ch = 3;
    c.latent_hw = 4;
    c.embed_dim = 6;
    c.enc1_ch = 4;
    c.enc2_ch = 8;
    return c;
}

Tensor unit(Tensor t) {
    const double n = l2_norm(t);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] /= n;
    return t;
}

}  // namespace

TEST_CASE("schedule arrays follow the closed-form recurrences") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    REQUIRE(s.steps == 1000);
    REQUIRE(s.beta.size() == 1000);
    CHECK(s.beta.front() == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(s.beta.back() == doctest::Approx(0.02).epsilon(1e-12));
    double abar = 1.0;
    for (std::size_t t = 0; t < 1000; ++t) {
        const double expect_beta = 1e-4 + (0.02 - 1e-4) * (double)t / 999.0;
        CHECK(s.beta[t] == doctest::Approx(expect_beta).epsilon(1e-12));
        CHECK(s.alpha[t] == doctest::Approx(1.0 - s.beta[t]).epsilon(1e-12));
        abar *= 1.0 - expect_beta;
        CHECK(s.alpha_bar[t] == doctest::Approx(abar).epsilon(1e-10));
        if (t > 0) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);  // strictly decreasing
    }
    CHECK(s.alpha_bar.back() < 0.01);  // near-total noise at the far end
}

TEST_CASE("tau algebra matches the strength formula") {
    CHECK(tau_from_strength(50, 1.0) == 0);
    CHECK(tau_from_strength(50, 0.02) == 49);
    CHECK(tau_from_strength(1000, 0.75) == 250);
    CHECK(tau_from_strength(50, 0.75) == 13);
    // Clamped to N-1 for tiny strengths.
    CHECK(tau_from_strength(50, 1e-9) == 49);
    CHECK_THROWS(tau_from_strength(50, 0.0));
    CHECK_THROWS(tau_from_strength(50, 1.5));
    // tau is non-increasing in s.
    std::size_t prev = 1000;
    for (double s = 0.05; s <= 1.0; s += 0.05) {
        const std::size_t t = tau_from_strength(40, s);
        CHECK(t <= prev);
        prev = t;
    }
}

TEST_CASE("add_noise marginal moments match the closed form (Monte Carlo)") {
    NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
    const std::size_t tau = 20;
    Tensor z = Tensor::full({3, 4, 4}, 0.7);
    Rng rng(5);
    const int reps = 10000;
    double s1 = 0, s2 = 0;
    for (int r = 0; r < reps; ++r) {
        Tensor x = add_noise(z, tau, s, rng);
        for (std::size_t i = 0; i < x.size(); ++i) {
            s1 += x[i];
            s2 += x[i] * x[i];
        }
    }
    const double n = (double)reps * (double)z.size();
    const double mean_expect = std::sqrt(s.alpha_bar[tau]) * 0.7;
    const double var_expect = 1.0 - s.alpha_bar[tau];
    const double mean_got = s1 / n;
    const double var_got = s2 / n - mean_got * mean_got;
    // 3-sigma bands on the Monte-Carlo estimators.
    CHECK(std::abs(mean_got - mean_expect) < 3.0 * std::sqrt(var_expect / n));
    CHECK(std::abs(var_got - var_expect) < 3.0 * var_expect * std::sqrt(2.0 / n));
}

TEST_CASE("denoise_step with beta=0 is the bitwise identity") {
    // make_schedule rejects beta = 0, so build the degenerate schedule by hand.
    NoiseSchedule s;
    s.steps = 3;
    s.beta = {0.0, 0.0, 0.0};
    s.alpha = {1.0, 1.0, 1.0};
    s.alpha_bar = {1.0, 1.0, 1.0};
    Rng rng(6);
    Tensor x = randn(rng, {3, 4, 4});
    Tensor eps = randn(rng, {3, 4, 4});
    Tensor y = denoise_step(x, 1, eps, s, rng);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("denoise_step matches its formula elementwise") {
    NoiseSchedule s = make_schedule(10, 1e-3, 0.05);
    Rng rng(7);
    Tensor x = randn(rng, {2, 3, 3});
    Tensor eps = randn(rng, {2, 3, 3});
    // t = 0 suppresses sampling noise, so the update is deterministic.
    Tensor y = denoise_step(x, 0, eps, s, rng);
    const double b = s.beta[0], a = s.alpha[0], ab = s.alpha_bar[0];
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(y[i] == doctest::Approx((x[i] - b / std::sqrt(1.0 - ab) * eps[i]) / std::sqrt(a)).epsilon(1e-12));

    // eps_hat = 0, alpha = 0.75 scales by 1/sqrt(0.75).
    NoiseSchedule s2 = make_schedule(2, 0.25, 0.25);
    Tensor zero = Tensor::zeros(x.shape());
    Tensor y2 = denoise_step(x, 0, zero, s2, rng);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y2[i] == doctest::Approx(x[i] / std::sqrt(0.75)).epsilon(1e-12));
}

TEST_CASE("denoiser output shape and deterministic init") {
    ToyDenoiser a(tiny_denoiser(), 9), b(tiny_denoiser(), 9);
    Rng rng(8);
    Tensor z = randn(rng, {3, 4, 4});
    SemanticEmbeddings cond{unit(randn(rng, {6})), unit(randn(rng, {6}))};
    Tensor pa = a.predict(z, 3, cond, CondMode::Both);
    Tensor pb = b.predict(z, 3, cond, CondMode::Both);
    REQUIRE(pa.shape() == z.shape());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("masked conditions are exactly the null-token substitution") {
    ToyDenoiser d(tiny_denoiser(), 10);
    Rng rng(9);
    Tensor z = randn(rng, {3, 4, 4});
    SemanticEmbeddings c1{unit(randn(rng, {6})), unit(randn(rng, {6}))};
    SemanticEmbeddings c2{unit(randn(rng, {6})), unit(randn(rng, {6}))};

    // With CondMode::None the output ignores the embeddings entirely.
    Tensor n1 = d.predict(z, 2, c1, CondMode::None);
    Tensor n2 = d.predict(z, 2, c2, CondMode::None);
    for (std::size_t i = 0; i < n1.size(); ++i) CHECK(n1[i] == n2[i]);

    // ImageOnly ignores the caption embedding.
    SemanticEmbeddings c3{c1.e_img, c2.e_cap};
    Tensor i1 = d.predict(z, 2, c1, CondMode::ImageOnly);
    Tensor i2 = d.predict(z, 2, c3, CondMode::ImageOnly);
    for (std::size_t i = 0; i < i1.size(); ++i) CHECK(i1[i] == i2[i]);

    // CaptionOnly ignores the image embedding.
    SemanticEmbeddings c4{c2.e_img, c1.e_cap};
    Tensor p1 = d.predict(z, 2, c1, CondMode::CaptionOnly);
    Tensor p2 = d.predict(z, 2, c4, CondMode::CaptionOnly);
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);

    // Both mode actually uses both: changing either embedding moves the output.
    Tensor b1 = d.predict(z, 2, c1, CondMode::Both);
    Tensor b2 = d.predict(z, 2, c2, CondMode::Both);
    double diff = 0;
    for (std::size_t i = 0; i < b1.size(); ++i) diff += std::abs(b1[i] - b2[i]);
    CHECK(diff > 1e-9);
}

TEST_CASE("denoiser single-sample overfit memorizes the high-noise regime") {
    // At low t the target eps is amplified by 1/sqrt(1-abar) ~ 100 relative
    // to its trace in the input, which this small architecture cannot
    // express, so the memorization check is restricted to the upper half of
    // the schedule where the eps-prediction task is well-conditioned.
    ToyDenoiser d(tiny_denoiser(), 11);
    Rng rng(10);
    std::vector<Tensor> lat = {rand_uniform(rng, {3, 4, 4}, 0.0, 1.0)};
    std::vector<Tensor> ei = {unit(randn(rng, {6}))};
    std::vector<Tensor> ec = {unit(randn(rng, {6}))};
    NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
    DenoiserTrainConfig tc;
    tc.steps = 2000;
    tc.batch = 4;
    tc.lr = 2e-3;
    tc.seed = 12;
    DenoiserTrainLog log = train_denoiser(d, lat, ei, ec, s, tc);
    // Windowed averages: single-batch losses are too noisy to compare.
    REQUIRE(log.loss.size() >= 2);
    CHECK(log.loss.back() < 0.7 * log.loss.front());

    Rng eval(77);
    double high_t = 0;
    int count = 0;
    SemanticEmbeddings cond{ei[0], ec[0]};
    for (std::size_t t = 25; t < 50; t += 5) {
        for (int r = 0; r < 20; ++r) {
            const double ab = s.alpha_bar[t], cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
            Tensor eps(lat[0].shape()), zt(lat[0].shape());
            for (std::size_t k = 0; k < eps.size(); ++k) {
                eps[k] = eval.normal();
                zt[k] = cs * lat[0][k] + cn * eps[k];
            }
            Tensor pred = d.predict(zt, t, cond, CondMode::Both);
            double l = 0;
            for (std::size_t k = 0; k < eps.size(); ++k) l += (pred[k] - eps[k]) * (pred[k] - eps[k]);
            high_t += l / (double)eps.size();
            ++count;
        }
    }
    CHECK(high_t / count < 0.35);
}

TEST_CASE("trained denoiser beats untrained on held-out eps prediction") {
    Rng rng(13);
    std::vector<Tensor> lat, ei, ec;
    for (int i = 0; i < 6; ++i) {
        lat.push_back(rand_uniform(rng, {3, 4, 4}, 0.0, 1.0));
        ei.push_back(unit(randn(rng, {6})));
        ec.push_back(unit(randn(rng, {6})));
    }
    NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
    ToyDenoiser trained(tiny_denoiser(), 14), untrained(tiny_denoiser(), 14);
    DenoiserTrainConfig tc;
    tc.steps = 800;
    tc.batch = 4;
    tc.seed = 15;
    train_denoiser(trained, lat, ei, ec, s, tc);
    const double lt = denoiser_eval_loss(trained, lat, ei, ec, s, 99);
    const double lu = denoiser_eval_loss(untrained, lat, ei, ec, s, 99);
    CHECK(lt < lu);
}

TEST_CASE("denoiser training is seed-deterministic") {
    Rng rng(16);
    std::vector<Tensor> lat = {rand_uniform(rng, {3, 4, 4}, 0.0, 1.0)};
    std::vector<Tensor> ei = {unit(randn(rng, {6}))};
    std::vector<Tensor> ec = {unit(randn(rng, {6}))};
    NoiseSchedule s = make_schedule(20, 1e-4, 0.02);
    ToyDenoiser a(tiny_denoiser(), 17), b(tiny_denoiser(), 17);
    DenoiserTrainConfig tc;
    tc.steps = 50;
    tc.batch = 2;
    tc.seed = 18;
    train_denoiser(a, lat, ei, ec, s, tc);
    train_denoiser(b, lat, ei, ec, s, tc);
    auto pa = a.params(), pb = b.params();
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pa[i]->size(); ++j) CHECK((*pa[i])[j] == (*pb[i])[j]);
}

TEST_CASE("denoiser checkpoint round-trip preserves predictions") {
    ToyDenoiser d(tiny_denoiser(), 19);
    const fs::path p = fs::temp_directory_path() / "vxr_den_test.ckpt";
    save_denoiser(p, d, {});
    ToyDenoiser back = load_denoiser(p);
    CHECK(back.config().enc1_ch == 4);
    Rng rng(20);
    Tensor z = randn(rng, {3, 4, 4});
    SemanticEmbeddings cond{unit(randn(rng, {6})), unit(randn(rng, {6}))};
    Tensor ya = d.predict(z, 1, cond, CondMode::Both);
    Tensor yb = back.predict(z, 1, cond, CondMode::Both);
    for (std::size_t i = 0; i < ya.size(); ++i) CHECK(ya[i] == doctest::Approx(yb[i]).epsilon(1e-5));
}

TEST_CASE("beta->0 limit: composed denoise steps with zero eps_hat recover the input") {
    NoiseSchedule s;
    s.steps = 5;
    s.beta.assign(5, 0.0);
    s.alpha.assign(5, 1.0);
    s.alpha_bar.assign(5, 1.0);
    Rng rng(21);
    Tensor x = randn(rng, {3, 4, 4});
    Tensor cur = x;
    Tensor zero = Tensor::zeros(x.shape());
    for (std::size_t t = 5; t-- > 0;) cur = denoise_step(cur, t, zero, s, rng);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(cur[i] == x[i]);
}
