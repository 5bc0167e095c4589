#pragma once

#include "vxr/models.hpp"
#include "vxr/nn.hpp"

#include <filesystem>

namespace vxr {

// beta_t in (0,1), alpha_t = 1 - beta_t, alpha_bar_t = prod_{u<=t} alpha_u.
struct NoiseSchedule {
    std::size_t steps = 0;
    std::vector<double> beta, alpha, alpha_bar;
};

// Linear beta ramp from beta_start to beta_end over N steps.
NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end);

// tau = N - floor(N*s), clamped to [0, N-1]. s must be in (0,1].
std::size_t tau_from_strength(std::size_t steps, double strength);

// One-step forward noising: sqrt(abar_tau) z + sqrt(1 - abar_tau) eps.
Tensor add_noise(const Tensor& z_prior, std::size_t tau, const NoiseSchedule& sched, Rng& rng);

// Ancestral update z_{t-1} = (z_t - beta_t/sqrt(1-abar_t) eps_hat)/sqrt(alpha_t)
// + sqrt(beta_t) eps; sampling noise is suppressed at t = 0, and beta_t = 0
// is the bitwise identity.
Tensor denoise_step(const Tensor& z_t, std::size_t t, const Tensor& eps_hat, const NoiseSchedule& sched,
                    Rng& rng);

enum class CondMode { Both, ImageOnly, CaptionOnly, None };
enum class InitMode { StructuralPrior, Gaussian };

CondMode cond_mode_from_string(const std::string& s);
std::string to_string(CondMode m);

struct ToyDenoiserConfig {
    std::size_t latent_ch = 3;
    std::size_t latent_hw = 16;
    std::size_t embed_dim = 64;
    std::size_t enc1_ch = 32;
    std::size_t enc2_ch = 64;
};

// Minimal conditional noise predictor: two-level conv encoder/decoder with
// one cross-attention block at the bottleneck. Queries are bottleneck
// spatial tokens; keys/values come from the two condition embeddings.
// Masked conditions are replaced by learned null tokens, so dropping a
// condition is exactly masking its attention contribution.
class ToyDenoiser {
  public:
    ToyDenoiser(ToyDenoiserConfig cfg, std::uint64_t init_seed);

    // z: [C, hw, hw], t in [0, steps-1]. Returns a latent-shaped noise estimate.
    Tensor predict(const Tensor& z, std::size_t t, const SemanticEmbeddings& cond, CondMode mode);

    // Gradient w.r.t. the last predict input; parameter grads accumulate.
    Tensor backward(const Tensor& grad_out);

    std::vector<Tensor*> params();
    std::vector<Tensor*> grads();
    void zero_grads();

    const ToyDenoiserConfig& config() const { return cfg_; }

  private:
    ToyDenoiserConfig cfg_;
    nn::Conv2d enc1_, enc2_, dec2_, dec1_;
    nn::SiLU act1_, act2_, act3_;
    nn::AvgPool2x2 pool_;
    nn::NearestUpsample2x up_;
    nn::Linear time_proj_;

    // Cross-attention parameters. Wq/Wo: [dm, dm]; Wk/Wv: [dm, D].
    Tensor Wq_, Wk_, Wv_, Wo_, null_img_, null_cap_;
    Tensor gWq_, gWk_, gWv_, gWo_, gnull_img_, gnull_cap_;

    // Attention cache for backward.
    struct AttnCache {
        Tensor tokens;        // [M, dm] queries input
        Tensor cond;          // [2, D] condition vectors after null substitution
        Tensor q, k, v;       // [M,dm], [2,dm], [2,dm]
        Tensor attn;          // [M, 2]
        Tensor attn_out;      // pre-Wo attention output [M, dm]
        Tensor enc1_out;      // skip connection
        bool null_used[2] = {false, false};
    } cache_;

    Tensor attention_forward(const Tensor& tokens);
    Tensor attention_backward(const Tensor& grad_tokens);
};

struct DenoiserTrainConfig {
    std::size_t steps = 3000;
    std::size_t batch = 16;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

struct DenoiserTrainLog {
    std::vector<double> loss;  // per logged interval (every 50 steps)
    double initial = 0.0;
    double final_loss = 0.0;
};

// Standard eps-prediction objective against the schedule's forward marginal.
DenoiserTrainLog train_denoiser(ToyDenoiser& model, const std::vector<Tensor>& latents,
                                const std::vector<Tensor>& e_img, const std::vector<Tensor>& e_cap,
                                const NoiseSchedule& sched, const DenoiserTrainConfig& tc);

// Held-out eps-prediction loss; used to compare trained vs untrained.
double denoiser_eval_loss(ToyDenoiser& model, const std::vector<Tensor>& latents,
                          const std::vector<Tensor>& e_img, const std::vector<Tensor>& e_cap,
                          const NoiseSchedule& sched, std::uint64_t seed);

void save_denoiser(const std::filesystem::path& path, const ToyDenoiser& model,
                   const nlohmann::json& extra = {});
ToyDenoiser load_denoiser(const std::filesystem::path& path);

struct ReconstructionConfig {
    double strength = 0.75;        // s in (0, 1]
    CondMode cond_mode = CondMode::Both;
    InitMode init_mode = InitMode::StructuralPrior;
};

struct ReconstructionResult {
    Image image;
    LatentPrior prior;             // z' from the structural generator
    SemanticEmbeddings embeddings; // e' pair from the semantic extractor
    std::size_t tau = 0;
};

// Full inference path: structural prior -> partial noising -> guided
// ancestral denoising -> pixel decode. strength 1.0 skips the sampler
// entirely and returns decode(z') bit-exactly.
ReconstructionResult reconstruct(const Tensor& v_spatial, const Tensor& v_semantic,
                                 StructuralGenerator& sg, SemanticExtractor& se, ToyDenoiser& denoiser,
                                 const Codec& codec, const NoiseSchedule& sched,
                                 const ReconstructionConfig& cfg, Rng& rng);

}  // namespace vxr
