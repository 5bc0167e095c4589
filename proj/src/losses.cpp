#include "vxr/losses.hpp"

#include <algorithm>
#include <cmath>

namespace vxr {

namespace {
constexpr double kGradEps = 1e-12;  // inside the magnitude square root

void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}
}  // namespace

SobelKernels::SobelKernels()
    : kx({3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1}), ky({3, 3}, {-1, -2, -1, 0, 0, 0, 1, 2, 1}) {}

double mse_loss(const Tensor& pred, const Tensor& target) {
    check_same(pred, target, "mse_loss");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / (double)pred.size();
}

Tensor mse_loss_grad(const Tensor& pred, const Tensor& target) {
    check_same(pred, target, "mse_loss_grad");
    Tensor g(pred.shape());
    const double c = 2.0 / (double)pred.size();
    for (std::size_t i = 0; i < pred.size(); ++i) g[i] = c * (pred[i] - target[i]);
    return g;
}

Tensor sobel_magnitude(const Tensor& z, const SobelKernels& k) {
    const Tensor gx = conv2d_3x3(z, k.kx);
    const Tensor gy = conv2d_3x3(z, k.ky);
    Tensor s(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) s[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i] + kGradEps);
    return s;
}

namespace {

// Treat [C,H,W] as a batch of one.
Tensor as_batch4(const Tensor& t) {
    if (t.rank() == 3) return t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
    if (t.rank() == 4) return t;
    throw ShapeError("sobel_loss expects [N,C,H,W] or [C,H,W], got " + shape_str(t.shape()));
}

Tensor sample_slice(const Tensor& batch, std::size_t n) {
    const std::size_t m = batch.dim(1) * batch.dim(2) * batch.dim(3);
    std::vector<double> d(batch.data().begin() + (long)(n * m), batch.data().begin() + (long)((n + 1) * m));
    return Tensor({batch.dim(1), batch.dim(2), batch.dim(3)}, std::move(d));
}

}  // namespace

double sobel_loss(const Tensor& pred, const Tensor& target) {
    check_same(pred, target, "sobel_loss");
    const Tensor p = as_batch4(pred), t = as_batch4(target);
    const SobelKernels k;
    double total = 0.0;
    for (std::size_t n = 0; n < p.dim(0); ++n) {
        const Tensor sp = sobel_magnitude(sample_slice(p, n), k);
        const Tensor st = sobel_magnitude(sample_slice(t, n), k);
        for (std::size_t i = 0; i < sp.size(); ++i) {
            const double d = sp[i] - st[i];
            total += d * d;
        }
    }
    return total / (double)p.dim(0);
}

Tensor sobel_loss_grad(const Tensor& pred, const Tensor& target) {
    check_same(pred, target, "sobel_loss_grad");
    const Tensor p = as_batch4(pred), t = as_batch4(target);
    const SobelKernels k;
    const std::size_t N = p.dim(0), m = p.dim(1) * p.dim(2) * p.dim(3);
    Tensor g(p.shape());
    for (std::size_t n = 0; n < N; ++n) {
        const Tensor zp = sample_slice(p, n);
        const Tensor gx = conv2d_3x3(zp, k.kx);
        const Tensor gy = conv2d_3x3(zp, k.ky);
        const Tensor st = sobel_magnitude(sample_slice(t, n), k);
        // dL/dS = (2/N)(S(p) - S(t)); dS/dgx = gx/S, dS/dgy = gy/S.
        Tensor dgx(zp.shape()), dgy(zp.shape());
        for (std::size_t i = 0; i < zp.size(); ++i) {
            const double sp = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i] + kGradEps);
            const double ds = 2.0 / (double)N * (sp - st[i]);
            dgx[i] = ds * gx[i] / sp;
            dgy[i] = ds * gy[i] / sp;
        }
        const Tensor gzx = conv2d_3x3_backward_input(dgx, k.kx);
        const Tensor gzy = conv2d_3x3_backward_input(dgy, k.ky);
        for (std::size_t i = 0; i < m; ++i) g[n * m + i] = gzx[i] + gzy[i];
    }
    return pred.rank() == 3 ? g.reshaped(pred.shape()) : g;
}

double structural_loss(const Tensor& pred, const Tensor& target) {
    return mse_loss(pred, target) + sobel_loss(pred, target);
}

Tensor structural_loss_grad(const Tensor& pred, const Tensor& target) {
    return add(mse_loss_grad(pred, target), sobel_loss_grad(pred, target));
}

namespace {

// Row-stable softmax of v/tau.
std::vector<double> softmax_scaled(const std::vector<double>& v, double tau) {
    const double mx = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double z = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        out[j] = std::exp((v[j] - mx) / tau);
        z += out[j];
    }
    for (double& o : out) o /= z;
    return out;
}

void check_softclip_inputs(const Tensor& p, const Tensor& t, const SoftClipConfig& cfg) {
    if (p.rank() != 2 || t.rank() != 2) throw ShapeError("softclip_loss expects [N,D] batches");
    if (!p.same_shape(t))
        throw ShapeError("softclip_loss: shape mismatch " + shape_str(p.shape()) + " vs " +
                         shape_str(t.shape()));
    if (p.dim(0) == 0) throw ShapeError("softclip_loss: empty batch");
    if (!(cfg.temperature > 0.0)) throw ValueError("softclip temperature must be positive");
}

}  // namespace

double softclip_loss(const Tensor& p, const Tensor& t, const SoftClipConfig& cfg) {
    check_softclip_inputs(p, t, cfg);
    const std::size_t N = p.dim(0), D = p.dim(1);
    double loss = 0.0;
    std::vector<double> tt(N), pt(N);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
            double stt = 0.0, spt = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
                stt += t.at2(i, d) * t.at2(j, d);
                spt += p.at2(i, d) * t.at2(j, d);
            }
            tt[j] = stt;
            pt[j] = spt;
        }
        const auto w = softmax_scaled(tt, cfg.temperature);
        const auto q = softmax_scaled(pt, cfg.temperature);
        for (std::size_t j = 0; j < N; ++j) loss -= w[j] * std::log(q[j]);
    }
    if (!std::isfinite(loss)) throw ValueError("softclip_loss: non-finite similarity");
    return loss;
}

Tensor softclip_loss_grad(const Tensor& p, const Tensor& t, const SoftClipConfig& cfg) {
    check_softclip_inputs(p, t, cfg);
    const std::size_t N = p.dim(0), D = p.dim(1);
    Tensor g({N, D});
    std::vector<double> tt(N), pt(N);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
            double stt = 0.0, spt = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
                stt += t.at2(i, d) * t.at2(j, d);
                spt += p.at2(i, d) * t.at2(j, d);
            }
            tt[j] = stt;
            pt[j] = spt;
        }
        const auto w = softmax_scaled(tt, cfg.temperature);
        const auto q = softmax_scaled(pt, cfg.temperature);
        // dL/d(logit_ij) = q_j - w_j (soft targets sum to 1 per row).
        for (std::size_t j = 0; j < N; ++j) {
            const double dl = (q[j] - w[j]) / cfg.temperature;
            for (std::size_t d = 0; d < D; ++d) g.at2(i, d) += dl * t.at2(j, d);
        }
    }
    return g;
}

SemanticLossValues semantic_losses(const Tensor& pred_img, const Tensor& pred_cap,
                                   const Tensor& target_img, const Tensor& target_cap,
                                   const SoftClipConfig& cfg) {
    return {softclip_loss(pred_img, target_img, cfg) + mse_loss(pred_img, target_img),
            softclip_loss(pred_cap, target_cap, cfg) + mse_loss(pred_cap, target_cap)};
}

Tensor semantic_loss_grad_img(const Tensor& pred_img, const Tensor& target_img, const SoftClipConfig& cfg) {
    return add(softclip_loss_grad(pred_img, target_img, cfg), mse_loss_grad(pred_img, target_img));
}

Tensor semantic_loss_grad_cap(const Tensor& pred_cap, const Tensor& target_cap, const SoftClipConfig& cfg) {
    return add(softclip_loss_grad(pred_cap, target_cap, cfg), mse_loss_grad(pred_cap, target_cap));
}

}  // namespace vxr
