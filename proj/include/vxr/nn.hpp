#pragma once

#include "vxr/rng.hpp"
#include "vxr/tensor.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace vxr::nn {

enum class Mode { Train, Eval };

// A layer owns its parameters, their gradient accumulators, and the
// activation cache from the most recent forward pass (the tape replayed
// by backward). Dense layers operate on [N, d]; spatial layers on
// [N, C, H, W].
struct Layer {
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, Mode mode, Rng* rng) = 0;
    // Gradients w.r.t. the last forward input; parameter grads accumulate.
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual std::vector<Tensor*> params() { return {}; }
    virtual std::vector<Tensor*> grads() { return {}; }
    virtual std::string kind() const = 0;
    void zero_grad() {
        for (Tensor* g : grads()) std::fill(g->data().begin(), g->data().end(), 0.0);
    }
};

struct Linear final : Layer {
    Tensor W, b, gW, gb;  // W: [out, in]

    Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng);
    Linear(Tensor weight, Tensor bias);

    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<Tensor*> params() override { return {&W, &b}; }
    std::vector<Tensor*> grads() override { return {&gW, &gb}; }
    std::string kind() const override { return "linear"; }

  private:
    Tensor x_;  // cached input
};

struct LayerNorm final : Layer {
    static constexpr double kEps = 1e-5;
    Tensor gamma, beta, ggamma, gbeta;

    explicit LayerNorm(std::size_t dim);

    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<Tensor*> params() override { return {&gamma, &beta}; }
    std::vector<Tensor*> grads() override { return {&ggamma, &gbeta}; }
    std::string kind() const override { return "layernorm"; }

  private:
    Tensor xhat_;
    std::vector<double> inv_std_;
};

// Normalizes each sample over channel groups; affine per channel.
// Input [N, C, H, W]; group count must divide C.
struct GroupNorm final : Layer {
    static constexpr double kEps = 1e-5;
    Tensor gamma, beta, ggamma, gbeta;
    std::size_t groups;

    GroupNorm(std::size_t channels, std::size_t groups);

    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<Tensor*> params() override { return {&gamma, &beta}; }
    std::vector<Tensor*> grads() override { return {&ggamma, &gbeta}; }
    std::string kind() const override { return "groupnorm"; }

  private:
    Tensor xhat_;
    std::vector<double> inv_std_;  // one per (sample, group)
    Shape in_shape_;
};

struct SiLU final : Layer {
    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "silu"; }

  private:
    Tensor x_;
};

// Inverted-scaling dropout: train-mode outputs are rescaled by 1/(1-p)
// so eval mode is the identity.
struct Dropout final : Layer {
    double rate;

    explicit Dropout(double rate);

    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "dropout"; }

  private:
    Tensor mask_;
    bool train_ = false;
};

// y = x + Lin2(Dropout(SiLU(LayerNorm(Lin1(x))))); hidden dim == input dim
// so the residual addition typechecks.
struct ResidualMLPBlock final : Layer {
    Linear lin1, lin2;
    LayerNorm norm;
    SiLU act;
    Dropout drop;

    ResidualMLPBlock(std::size_t dim, double dropout_rate, Rng& rng);

    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<Tensor*> params() override;
    std::vector<Tensor*> grads() override;
    std::string kind() const override { return "residual_mlp"; }
};

struct NearestUpsample2x final : Layer {
    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "upsample2x"; }

  private:
    Shape in_shape_;
};

// 3x3 convolution with replicate padding, arbitrary channel counts.
struct Conv2d final : Layer {
    Tensor W, b, gW, gb;  // W: [Cout, Cin, 3, 3]

    Conv2d(std::size_t in_ch, std::size_t out_ch, Rng& rng);

    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<Tensor*> params() override { return {&W, &b}; }
    std::vector<Tensor*> grads() override { return {&gW, &gb}; }
    std::string kind() const override { return "conv2d"; }

  private:
    Tensor x_;
};

struct AvgPool2x2 final : Layer {
    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "avgpool2x2"; }

  private:
    Shape in_shape_;
};

struct Sequential final : Layer {
    std::vector<std::unique_ptr<Layer>> layers;

    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<Tensor*> params() override;
    std::vector<Tensor*> grads() override;
    std::string kind() const override { return "sequential"; }
};

// Row-wise L2 normalization with analytic backward; used by embedding heads.
struct L2NormalizeRows final : Layer {
    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "l2norm_rows"; }

  private:
    Tensor y_;
    std::vector<double> norms_;
};

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void attach(const std::vector<Tensor*>& params);
    void step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads);

    std::vector<Tensor> m, v;
    std::uint64_t t = 0;
};

// Checkpoint container: u32 LE header length + JSON header + one VXD
// payload per parameter, in the order named by header["params"].
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& params);
std::pair<nlohmann::json, std::map<std::string, Tensor>> load_checkpoint(const std::filesystem::path& path);

}  // namespace vxr::nn
