#pragma once

#include "vxr/attrs.hpp"
#include "vxr/rng.hpp"
#include "vxr/tensor.hpp"

namespace vxr {

// RGB image in [0,1], pixels shaped [3,H,W].
struct Image {
    Tensor pixels;

    Image() = default;
    explicit Image(Tensor px);

    std::size_t height() const { return pixels.dim(1); }
    std::size_t width() const { return pixels.dim(2); }
};

// Structural latent: [C_z, H/4, W/4] image of the stimulus.
struct LatentPrior {
    Tensor z;
};

// One predicted-or-reference embedding pair, each unit-L2-normalized.
struct SemanticEmbeddings {
    Tensor e_img;  // [D]
    Tensor e_cap;  // [D]
};

// Frozen deterministic stand-ins for the pretrained pixel<->latent
// autoencoder and the image/text embedding encoders. Everything is a pure
// function of (seed, input); no training happens here.
class Codec {
  public:
    static constexpr std::size_t kDownsample = 4;

    Codec(std::uint64_t seed, std::size_t image_hw, std::size_t embed_dim);

    std::size_t embed_dim() const { return embed_dim_; }
    std::size_t image_hw() const { return image_hw_; }
    Shape latent_shape() const { return {3, image_hw_ / kDownsample, image_hw_ / kDownsample}; }

    // Per-channel 4x4 block-average downsampling.
    LatentPrior autokl_encode(const Image& img) const;

    // Nearest-neighbor 4x upsample, clamped to [0,1].
    Image autokl_decode(const LatentPrior& z) const;

    // Seeded fixed random projection of the flattened image, L2-normalized.
    Tensor clip_image_embed(const Image& img) const;

    // Seeded embedding-table lookup, L2-normalized; injective over the
    // finite attribute grid.
    Tensor clip_text_embed(const AttributeVector& attrs) const;

  private:
    std::size_t image_hw_;
    std::size_t embed_dim_;
    Tensor img_proj_;  // [D, 3*H*W]
    Tensor table_shape_, table_color_, table_row_, table_col_, table_scale_, table_bg_;  // each [n, D]
};

// Encode + clip both modalities for a stimulus in one call.
struct CodecOutputs {
    LatentPrior latent;
    SemanticEmbeddings embeddings;
};
CodecOutputs encode_stimulus(const Codec& codec, const Image& img, const AttributeVector& attrs);

}  // namespace vxr
