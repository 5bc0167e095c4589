#include "vxr/nn.hpp"

#include "vxr/io.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>

namespace vxr::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::Index;

static void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

// ---------------------------------------------------------------- Linear

static Tensor init_uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt((double)fan_in);
    return rand_uniform(rng, std::move(shape), -bound, bound);
}

Linear::Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : W(init_uniform_fan_in({out_dim, in_dim}, in_dim, rng)),
      b(init_uniform_fan_in({out_dim}, in_dim, rng)),
      gW(Shape{out_dim, in_dim}),
      gb(Shape{out_dim}) {}

Linear::Linear(Tensor weight, Tensor bias)
    : W(std::move(weight)), b(std::move(bias)), gW(W.shape()), gb(b.shape()) {
    require(W.rank() == 2 && b.rank() == 1 && b.dim(0) == W.dim(0), "linear: bad parameter shapes");
}

Tensor Linear::forward(const Tensor& x, Mode, Rng*) {
    require(x.rank() == 2 && x.dim(1) == W.dim(1),
            "linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(W.shape()));
    x_ = x;
    const Index N = (Index)x.dim(0), in = (Index)W.dim(1), out = (Index)W.dim(0);
    Tensor y({x.dim(0), W.dim(0)});
    Eigen::Map<const RowMat> mx(x.data().data(), N, in);
    Eigen::Map<const RowMat> mw(W.data().data(), out, in);
    Eigen::Map<RowMat> my(y.data().data(), N, out);
    my.noalias() = mx * mw.transpose();
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < out; ++j) my(i, j) += b[(std::size_t)j];
    return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
    require(grad_out.rank() == 2 && grad_out.dim(0) == x_.dim(0) && grad_out.dim(1) == W.dim(0),
            "linear backward: grad shape " + shape_str(grad_out.shape()));
    const Index N = (Index)x_.dim(0), in = (Index)W.dim(1), out = (Index)W.dim(0);
    Eigen::Map<const RowMat> mg(grad_out.data().data(), N, out);
    Eigen::Map<const RowMat> mx(x_.data().data(), N, in);
    Eigen::Map<const RowMat> mw(W.data().data(), out, in);
    Eigen::Map<RowMat> mgW(gW.data().data(), out, in);
    mgW.noalias() += mg.transpose() * mx;
    for (Index j = 0; j < out; ++j) gb[(std::size_t)j] += mg.col(j).sum();
    Tensor gx({x_.dim(0), x_.dim(1)});
    Eigen::Map<RowMat> mgx(gx.data().data(), N, in);
    mgx.noalias() = mg * mw;
    return gx;
}

// -------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(std::size_t dim)
    : gamma(Tensor::full({dim}, 1.0)), beta(Shape{dim}), ggamma(Shape{dim}), gbeta(Shape{dim}) {}

Tensor LayerNorm::forward(const Tensor& x, Mode, Rng*) {
    require(x.rank() == 2 && x.dim(1) == gamma.dim(0), "layernorm: input " + shape_str(x.shape()));
    const std::size_t N = x.dim(0), D = x.dim(1);
    xhat_ = Tensor({N, D});
    inv_std_.assign(N, 0.0);
    Tensor y({N, D});
    for (std::size_t i = 0; i < N; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < D; ++j) mu += x.at2(i, j);
        mu /= (double)D;
        double var = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
            const double d = x.at2(i, j) - mu;
            var += d * d;
        }
        var /= (double)D;
        const double is = 1.0 / std::sqrt(var + kEps);
        inv_std_[i] = is;
        for (std::size_t j = 0; j < D; ++j) {
            const double xh = (x.at2(i, j) - mu) * is;
            xhat_.at2(i, j) = xh;
            y.at2(i, j) = gamma[j] * xh + beta[j];
        }
    }
    return y;
}

Tensor LayerNorm::backward(const Tensor& grad_out) {
    require(grad_out.same_shape(xhat_), "layernorm backward: grad shape " + shape_str(grad_out.shape()));
    const std::size_t N = xhat_.dim(0), D = xhat_.dim(1);
    Tensor gx({N, D});
    for (std::size_t i = 0; i < N; ++i) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
            const double gh = grad_out.at2(i, j) * gamma[j];
            sum_g += gh;
            sum_gx += gh * xhat_.at2(i, j);
            ggamma[j] += grad_out.at2(i, j) * xhat_.at2(i, j);
            gbeta[j] += grad_out.at2(i, j);
        }
        const double mg = sum_g / (double)D, mgx = sum_gx / (double)D;
        for (std::size_t j = 0; j < D; ++j) {
            const double gh = grad_out.at2(i, j) * gamma[j];
            gx.at2(i, j) = inv_std_[i] * (gh - mg - xhat_.at2(i, j) * mgx);
        }
    }
    return gx;
}

// -------------------------------------------------------------- GroupNorm

GroupNorm::GroupNorm(std::size_t channels, std::size_t groups_)
    : gamma(Tensor::full({channels}, 1.0)),
      beta(Shape{channels}),
      ggamma(Shape{channels}),
      gbeta(Shape{channels}),
      groups(groups_) {
    if (groups == 0 || channels % groups != 0)
        throw ShapeError("groupnorm: group count " + std::to_string(groups) + " must divide channels " +
                         std::to_string(channels));
}

Tensor GroupNorm::forward(const Tensor& x, Mode, Rng*) {
    require(x.rank() == 4 && x.dim(1) == gamma.dim(0), "groupnorm: input " + shape_str(x.shape()));
    in_shape_ = x.shape();
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t cpg = C / groups, m = cpg * H * W;
    xhat_ = Tensor(x.shape());
    inv_std_.assign(N * groups, 0.0);
    Tensor y(x.shape());
    const std::size_t hw = H * W;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t base = (n * C + g * cpg) * hw;
            double mu = 0.0;
            for (std::size_t k = 0; k < m; ++k) mu += x[base + k];
            mu /= (double)m;
            double var = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                const double d = x[base + k] - mu;
                var += d * d;
            }
            var /= (double)m;
            const double is = 1.0 / std::sqrt(var + kEps);
            inv_std_[n * groups + g] = is;
            for (std::size_t k = 0; k < m; ++k) {
                const std::size_t c = g * cpg + k / hw;
                const double xh = (x[base + k] - mu) * is;
                xhat_[base + k] = xh;
                y[base + k] = gamma[c] * xh + beta[c];
            }
        }
    return y;
}

Tensor GroupNorm::backward(const Tensor& grad_out) {
    require(grad_out.same_shape(xhat_), "groupnorm backward: grad shape " + shape_str(grad_out.shape()));
    const std::size_t N = in_shape_[0], C = in_shape_[1], H = in_shape_[2], W = in_shape_[3];
    const std::size_t cpg = C / groups, hw = H * W, m = cpg * hw;
    Tensor gx(in_shape_);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t base = (n * C + g * cpg) * hw;
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                const std::size_t c = g * cpg + k / hw;
                const double gh = grad_out[base + k] * gamma[c];
                sum_g += gh;
                sum_gx += gh * xhat_[base + k];
                ggamma[c] += grad_out[base + k] * xhat_[base + k];
                gbeta[c] += grad_out[base + k];
            }
            const double is = inv_std_[n * groups + g];
            const double mg = sum_g / (double)m, mgx = sum_gx / (double)m;
            for (std::size_t k = 0; k < m; ++k) {
                const std::size_t c = g * cpg + k / hw;
                const double gh = grad_out[base + k] * gamma[c];
                gx[base + k] = is * (gh - mg - xhat_[base + k] * mgx);
            }
        }
    return gx;
}

// ------------------------------------------------------------------ SiLU

static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor SiLU::forward(const Tensor& x, Mode, Rng*) {
    x_ = x;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid(x[i]);
    return y;
}

Tensor SiLU::backward(const Tensor& grad_out) {
    require(grad_out.same_shape(x_), "silu backward: grad shape " + shape_str(grad_out.shape()));
    Tensor gx(x_.shape());
    for (std::size_t i = 0; i < x_.size(); ++i) {
        const double s = sigmoid(x_[i]);
        gx[i] = grad_out[i] * (s * (1.0 + x_[i] * (1.0 - s)));
    }
    return gx;
}

// --------------------------------------------------------------- Dropout

Dropout::Dropout(double rate_) : rate(rate_) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ValueError("dropout rate must be in [0,1)");
}

Tensor Dropout::forward(const Tensor& x, Mode mode, Rng* rng) {
    train_ = (mode == Mode::Train && rate > 0.0);
    if (!train_) return x;
    if (!rng) throw std::invalid_argument("dropout in train mode needs an rng");
    mask_ = Tensor(x.shape());
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mask_[i] = (rng->uniform() > rate) ? keep_scale : 0.0;
        y[i] = x[i] * mask_[i];
    }
    return y;
}

Tensor Dropout::backward(const Tensor& grad_out) {
    if (!train_) return grad_out;
    return mul(grad_out, mask_);
}

// ------------------------------------------------------ ResidualMLPBlock

ResidualMLPBlock::ResidualMLPBlock(std::size_t dim, double dropout_rate, Rng& rng)
    : lin1(dim, dim, rng), lin2(dim, dim, rng), norm(dim), drop(dropout_rate) {}

Tensor ResidualMLPBlock::forward(const Tensor& x, Mode mode, Rng* rng) {
    Tensor h = lin1.forward(x, mode, rng);
    h = norm.forward(h, mode, rng);
    h = act.forward(h, mode, rng);
    h = drop.forward(h, mode, rng);
    h = lin2.forward(h, mode, rng);
    return add(x, h);
}

Tensor ResidualMLPBlock::backward(const Tensor& grad_out) {
    Tensor g = lin2.backward(grad_out);
    g = drop.backward(g);
    g = act.backward(g);
    g = norm.backward(g);
    g = lin1.backward(g);
    return add(grad_out, g);
}

std::vector<Tensor*> ResidualMLPBlock::params() {
    return {&lin1.W, &lin1.b, &norm.gamma, &norm.beta, &lin2.W, &lin2.b};
}

std::vector<Tensor*> ResidualMLPBlock::grads() {
    return {&lin1.gW, &lin1.gb, &norm.ggamma, &norm.gbeta, &lin2.gW, &lin2.gb};
}

// ----------------------------------------------------- NearestUpsample2x

Tensor NearestUpsample2x::forward(const Tensor& x, Mode, Rng*) {
    require(x.rank() == 4, "upsample2x: input must be [N,C,H,W], got " + shape_str(x.shape()));
    in_shape_ = x.shape();
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({N, C, 2 * H, 2 * W});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < 2 * H; ++i)
                for (std::size_t j = 0; j < 2 * W; ++j)
                    y[((n * C + c) * 2 * H + i) * 2 * W + j] =
                        x[((n * C + c) * H + i / 2) * W + j / 2];
    return y;
}

Tensor NearestUpsample2x::backward(const Tensor& grad_out) {
    const std::size_t N = in_shape_[0], C = in_shape_[1], H = in_shape_[2], W = in_shape_[3];
    require(grad_out.rank() == 4 && grad_out.dim(2) == 2 * H && grad_out.dim(3) == 2 * W,
            "upsample2x backward: grad shape " + shape_str(grad_out.shape()));
    Tensor gx(in_shape_);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < 2 * H; ++i)
                for (std::size_t j = 0; j < 2 * W; ++j)
                    gx[((n * C + c) * H + i / 2) * W + j / 2] +=
                        grad_out[((n * C + c) * 2 * H + i) * 2 * W + j];
    return gx;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_ch, std::size_t out_ch, Rng& rng)
    : W(init_uniform_fan_in({out_ch, in_ch, 3, 3}, in_ch * 9, rng)),
      b(init_uniform_fan_in({out_ch}, in_ch * 9, rng)),
      gW(W.shape()),
      gb(b.shape()) {}

static std::size_t clampi(long i, long n) { return (std::size_t)std::clamp(i, 0L, n - 1); }

Tensor Conv2d::forward(const Tensor& x, Mode, Rng*) {
    require(x.rank() == 4 && x.dim(1) == W.dim(1),
            "conv2d: input " + shape_str(x.shape()) + " vs weight " + shape_str(W.shape()));
    x_ = x;
    const std::size_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), Wd = x.dim(3), Co = W.dim(0);
    Tensor y({N, Co, H, Wd});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t co = 0; co < Co; ++co)
            for (long i = 0; i < (long)H; ++i)
                for (long j = 0; j < (long)Wd; ++j) {
                    double acc = b[co];
                    for (std::size_t ci = 0; ci < Ci; ++ci)
                        for (long di = -1; di <= 1; ++di)
                            for (long dj = -1; dj <= 1; ++dj)
                                acc += W[((co * Ci + ci) * 3 + (std::size_t)(di + 1)) * 3 +
                                         (std::size_t)(dj + 1)] *
                                       x[((n * Ci + ci) * H + clampi(i + di, (long)H)) * Wd +
                                         clampi(j + dj, (long)Wd)];
                    y[((n * Co + co) * H + (std::size_t)i) * Wd + (std::size_t)j] = acc;
                }
    return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    const std::size_t N = x_.dim(0), Ci = x_.dim(1), H = x_.dim(2), Wd = x_.dim(3), Co = W.dim(0);
    require(grad_out.rank() == 4 && grad_out.dim(0) == N && grad_out.dim(1) == Co &&
                grad_out.dim(2) == H && grad_out.dim(3) == Wd,
            "conv2d backward: grad shape " + shape_str(grad_out.shape()));
    Tensor gx(x_.shape());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t co = 0; co < Co; ++co)
            for (long i = 0; i < (long)H; ++i)
                for (long j = 0; j < (long)Wd; ++j) {
                    const double g = grad_out[((n * Co + co) * H + (std::size_t)i) * Wd + (std::size_t)j];
                    gb[co] += g;
                    for (std::size_t ci = 0; ci < Ci; ++ci)
                        for (long di = -1; di <= 1; ++di)
                            for (long dj = -1; dj <= 1; ++dj) {
                                const std::size_t wi =
                                    ((co * Ci + ci) * 3 + (std::size_t)(di + 1)) * 3 + (std::size_t)(dj + 1);
                                const std::size_t xi = ((n * Ci + ci) * H + clampi(i + di, (long)H)) * Wd +
                                                       clampi(j + dj, (long)Wd);
                                gW[wi] += g * x_[xi];
                                gx[xi] += g * W[wi];
                            }
                }
    return gx;
}

// ------------------------------------------------------------ AvgPool2x2

Tensor AvgPool2x2::forward(const Tensor& x, Mode, Rng*) {
    require(x.rank() == 4 && x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0,
            "avgpool2x2: input must be [N,C,even,even], got " + shape_str(x.shape()));
    in_shape_ = x.shape();
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({N, C, H / 2, W / 2});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < H / 2; ++i)
                for (std::size_t j = 0; j < W / 2; ++j) {
                    double acc = 0.0;
                    for (std::size_t di = 0; di < 2; ++di)
                        for (std::size_t dj = 0; dj < 2; ++dj)
                            acc += x[((n * C + c) * H + 2 * i + di) * W + 2 * j + dj];
                    y[((n * C + c) * (H / 2) + i) * (W / 2) + j] = acc * 0.25;
                }
    return y;
}

Tensor AvgPool2x2::backward(const Tensor& grad_out) {
    const std::size_t N = in_shape_[0], C = in_shape_[1], H = in_shape_[2], W = in_shape_[3];
    require(grad_out.rank() == 4 && grad_out.dim(2) == H / 2 && grad_out.dim(3) == W / 2,
            "avgpool2x2 backward: grad shape " + shape_str(grad_out.shape()));
    Tensor gx(in_shape_);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < H / 2; ++i)
                for (std::size_t j = 0; j < W / 2; ++j) {
                    const double g = 0.25 * grad_out[((n * C + c) * (H / 2) + i) * (W / 2) + j];
                    for (std::size_t di = 0; di < 2; ++di)
                        for (std::size_t dj = 0; dj < 2; ++dj)
                            gx[((n * C + c) * H + 2 * i + di) * W + 2 * j + dj] += g;
                }
    return gx;
}

// ------------------------------------------------------------ Sequential

Tensor Sequential::forward(const Tensor& x, Mode mode, Rng* rng) {
    Tensor h = x;
    for (auto& l : layers) h = l->forward(h, mode, rng);
    return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) g = (*it)->backward(g);
    return g;
}

std::vector<Tensor*> Sequential::params() {
    std::vector<Tensor*> ps;
    for (auto& l : layers)
        for (Tensor* p : l->params()) ps.push_back(p);
    return ps;
}

std::vector<Tensor*> Sequential::grads() {
    std::vector<Tensor*> gs;
    for (auto& l : layers)
        for (Tensor* g : l->grads()) gs.push_back(g);
    return gs;
}

// ------------------------------------------------------- L2NormalizeRows

Tensor L2NormalizeRows::forward(const Tensor& x, Mode, Rng*) {
    require(x.rank() == 2, "l2norm_rows: input must be [N,D], got " + shape_str(x.shape()));
    const std::size_t N = x.dim(0), D = x.dim(1);
    y_ = Tensor({N, D});
    norms_.assign(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < D; ++j) s += x.at2(i, j) * x.at2(i, j);
        const double nrm = std::sqrt(s) + 1e-12;
        norms_[i] = nrm;
        for (std::size_t j = 0; j < D; ++j) y_.at2(i, j) = x.at2(i, j) / nrm;
    }
    return y_;
}

Tensor L2NormalizeRows::backward(const Tensor& grad_out) {
    require(grad_out.same_shape(y_), "l2norm_rows backward: grad shape " + shape_str(grad_out.shape()));
    const std::size_t N = y_.dim(0), D = y_.dim(1);
    Tensor gx({N, D});
    for (std::size_t i = 0; i < N; ++i) {
        double gy_dot_y = 0.0;
        for (std::size_t j = 0; j < D; ++j) gy_dot_y += grad_out.at2(i, j) * y_.at2(i, j);
        for (std::size_t j = 0; j < D; ++j)
            gx.at2(i, j) = (grad_out.at2(i, j) - y_.at2(i, j) * gy_dot_y) / norms_[i];
    }
    return gx;
}

// ------------------------------------------------------------------ Adam

void Adam::attach(const std::vector<Tensor*>& params) {
    m.clear();
    v.clear();
    for (const Tensor* p : params) {
        m.emplace_back(p->shape());
        v.emplace_back(p->shape());
    }
    t = 0;
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads) {
    if (m.size() != params.size()) attach(params);
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, (double)t);
    const double bc2 = 1.0 - std::pow(beta2, (double)t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[k][i] = beta1 * m[k][i] + (1.0 - beta1) * g[i];
            v[k][i] = beta2 * v[k][i] + (1.0 - beta2) * g[i] * g[i];
            p[i] -= lr * (m[k][i] / bc1) / (std::sqrt(v[k][i] / bc2) + eps);
        }
    }
}

// ------------------------------------------------------------ Checkpoint

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& params) {
    nlohmann::json header = meta;
    header["params"] = nlohmann::json::array();
    for (const auto& [name, t] : params) {
        nlohmann::json p;
        p["name"] = name;
        p["shape"] = t->shape();
        header["params"].push_back(p);
    }
    const std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    const std::uint32_t len = (std::uint32_t)hs.size();
    unsigned char b[4] = {(unsigned char)(len & 0xFF), (unsigned char)((len >> 8) & 0xFF),
                          (unsigned char)((len >> 16) & 0xFF), (unsigned char)((len >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b), 4);
    os.write(hs.data(), (std::streamsize)hs.size());
    for (const auto& [name, t] : params) write_vxd(os, *t);
}

std::pair<nlohmann::json, std::map<std::string, Tensor>> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated header length");
    const std::uint32_t len = (std::uint32_t)b[0] | ((std::uint32_t)b[1] << 8) |
                              ((std::uint32_t)b[2] << 16) | ((std::uint32_t)b[3] << 24);
    std::string hs(len, '\0');
    is.read(hs.data(), (std::streamsize)len);
    if (!is) throw std::runtime_error("checkpoint: truncated header");
    nlohmann::json header = nlohmann::json::parse(hs);
    std::map<std::string, Tensor> tensors;
    for (const auto& p : header.at("params")) tensors.emplace(p.at("name").get<std::string>(), read_vxd(is));
    return {header, std::move(tensors)};
}

}  // namespace vxr::nn
