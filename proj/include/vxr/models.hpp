#pragma once

#include "vxr/codec.hpp"
#include "vxr/losses.hpp"
#include "vxr/nn.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace vxr {

// Shared voxel-to-feature trunk: Linear -> LayerNorm -> SiLU -> Dropout ->
// k residual MLP blocks.
struct DenseTrunk {
    nn::Linear input;
    nn::LayerNorm norm;
    nn::SiLU act;
    nn::Dropout drop;
    std::vector<nn::ResidualMLPBlock> blocks;

    DenseTrunk(std::size_t in_dim, std::size_t hidden, std::size_t num_blocks, double dropout, Rng& rng);

    Tensor forward(const Tensor& x, nn::Mode mode, Rng* rng);
    Tensor backward(const Tensor& grad_out);
    std::vector<Tensor*> params();
    std::vector<Tensor*> grads();
};

struct StructuralGeneratorConfig {
    std::size_t voxel_dim = 512;
    std::size_t hidden = 256;
    std::size_t blocks = 2;
    double dropout = 0.1;
    std::size_t latent_ch = 3;
    std::size_t base_hw = 4;          // pre-upsample grid
    std::size_t upsample_stages = 2;  // 4 -> 8 -> 16

    std::size_t latent_hw() const { return base_hw << upsample_stages; }
};

// Maps spatial-ROI voxels to the structural latent prior.
class StructuralGenerator {
  public:
    StructuralGenerator(StructuralGeneratorConfig cfg, std::uint64_t init_seed);

    // v: [N, voxel_dim] -> [N, C, hw, hw]
    Tensor forward_batch(const Tensor& v, nn::Mode mode, Rng* rng);
    Tensor backward_batch(const Tensor& grad_out);

    // Single-record eval-mode inference.
    LatentPrior forward(const Tensor& v_spatial);

    std::vector<Tensor*> params();
    std::vector<Tensor*> grads();
    void zero_grads();

    const StructuralGeneratorConfig& config() const { return cfg_; }

  private:
    StructuralGeneratorConfig cfg_;
    DenseTrunk trunk_;
    nn::Linear proj_;
    nn::GroupNorm gnorm_;
    std::vector<nn::NearestUpsample2x> ups_;
};

struct SemanticExtractorConfig {
    std::size_t voxel_dim = 512;
    std::size_t hidden = 256;
    std::size_t blocks = 2;
    double dropout = 0.1;
    std::size_t embed_dim = 64;
};

// Maps semantic-ROI voxels to unit-norm image/caption embedding pair.
class SemanticExtractor {
  public:
    SemanticExtractor(SemanticExtractorConfig cfg, std::uint64_t init_seed);

    struct BatchOut {
        Tensor e_img;  // [N, D], rows unit-norm
        Tensor e_cap;
    };
    BatchOut forward_batch(const Tensor& v, nn::Mode mode, Rng* rng);
    // Gradients w.r.t. the two outputs; returns grad w.r.t. the voxel input.
    Tensor backward_batch(const Tensor& grad_img, const Tensor& grad_cap);

    SemanticEmbeddings forward(const Tensor& v_semantic);

    std::vector<Tensor*> params();
    std::vector<Tensor*> grads();
    void zero_grads();

    const SemanticExtractorConfig& config() const { return cfg_; }

  private:
    SemanticExtractorConfig cfg_;
    DenseTrunk trunk_;
    nn::Linear head_img_, head_cap_;
    nn::L2NormalizeRows norm_img_, norm_cap_;
};

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch = 30;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

struct TrainLog {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_loss_img;  // semantic runs only
    std::vector<double> epoch_loss_cap;

    double initial() const { return epoch_loss.front(); }
    double final_loss() const { return epoch_loss.back(); }
};

// Adam minimization of structural_loss over (voxels, latents) pairs.
// Throws ValueError on NaN loss, ShapeError on an empty dataset.
TrainLog train_structural(StructuralGenerator& model, const std::vector<Tensor>& voxels,
                          const std::vector<Tensor>& latents, const TrainConfig& tc);

// Adam minimization of L_img + L_cap over (voxels, e_img, e_cap) triples.
TrainLog train_semantic(SemanticExtractor& model, const std::vector<Tensor>& voxels,
                        const std::vector<Tensor>& e_img, const std::vector<Tensor>& e_cap,
                        const TrainConfig& tc, const SoftClipConfig& scc = {});

// Checkpoint IO. The JSON header records the config, so loading needs no
// out-of-band information.
void save_structural(const std::filesystem::path& path, const StructuralGenerator& model,
                     const nlohmann::json& extra = {});
StructuralGenerator load_structural(const std::filesystem::path& path);

void save_semantic(const std::filesystem::path& path, const SemanticExtractor& model,
                   const nlohmann::json& extra = {});
SemanticExtractor load_semantic(const std::filesystem::path& path);

// First-layer weight matrix of a checkpoint, [hidden, voxel_dim]; used for
// voxel contribution maps.
Tensor checkpoint_first_layer_weight(const std::filesystem::path& path);

}  // namespace vxr
