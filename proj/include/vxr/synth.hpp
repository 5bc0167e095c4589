#pragma once

#include "vxr/codec.hpp"

#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

namespace vxr {

// One trial: the two ROI voxel vectors plus the stimulus reference.
struct VoxelRecord {
    std::size_t id = 0;         // sequential record id within its split
    std::size_t stimulus_id = 0;  // attribute-grid index, unique per stimulus
    AttributeVector attrs;
    Tensor v_spatial;   // [V_s]
    Tensor v_semantic;  // [V_m]
};

// Boolean mask over a synthetic 3-D voxel grid.
struct RoiMask {
    Shape grid;               // e.g. [16,16,8]
    std::vector<bool> mask;   // flattened, scan order
    std::string label;        // "spatial" or "semantic"

    std::size_t popcount() const;
};

// Disjoint spatial/semantic masks drawn from a seeded permutation of grid
// positions.
std::pair<RoiMask, RoiMask> make_roi_masks(const Shape& grid, std::size_t n_spatial,
                                           std::size_t n_semantic, std::uint64_t seed);

// Flattened values where the mask is true, fixed scan order. An all-false
// mask yields an empty vector result (length 0).
std::vector<double> roi_extract(const Tensor& volume, const RoiMask& mask);

// Inverse scatter: values placed back at mask positions, zero elsewhere.
Tensor roi_scatter(const std::vector<double>& values, const RoiMask& mask);

// Deterministic 3x64x64 rendering: smooth textured background + colored
// shape at a 4x4 grid cell. Output is quantized to the 8-bit PPM grid so
// the in-memory image equals its on-disk representation.
Image gen_stimulus(const AttributeVector& attrs, std::size_t image_hw = 64);

// Frozen linear response model: spatial voxels load on the structural
// latent, semantic voxels on the concatenated embeddings, plus Gaussian
// sensor noise.
struct ForwardModel {
    Tensor w_spatial;   // [V_s, latent numel]
    Tensor w_semantic;  // [V_m, 2*D]
    double sigma = 0.1;

    VoxelRecord apply(const Codec& codec, const Image& img, const AttributeVector& attrs, Rng& rng) const;
};

ForwardModel make_forward_model(std::size_t v_spatial, std::size_t v_semantic, std::size_t latent_numel,
                                std::size_t embed_dim, double sigma, std::uint64_t seed);

struct DatasetConfig {
    std::size_t train_size = 800;
    std::size_t test_size = 100;
    std::size_t v_spatial = 512;
    std::size_t v_semantic = 512;
    double sigma = 0.1;
    std::uint64_t seed = 0;
    std::size_t image_hw = 64;
    std::size_t embed_dim = 64;
    Shape roi_grid = {16, 16, 8};

    nlohmann::json to_json() const;
    static DatasetConfig from_json(const nlohmann::json& j);  // rejects unknown keys
};

struct Dataset {
    DatasetConfig config;
    std::vector<VoxelRecord> train;
    std::vector<VoxelRecord> test;
    RoiMask roi_spatial;
    RoiMask roi_semantic;
};

// Synthesizes the dataset in memory. Train and test stimuli are disjoint
// draws from the attribute grid; throws if sizes exceed its cardinality.
Dataset build_dataset(const DatasetConfig& cfg);

// On-disk layout: manifest.json + per-record PPM stimulus + VXD voxel files.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

// The codec every dataset pairs with (seed derived from the dataset seed).
Codec dataset_codec(const DatasetConfig& cfg);

// Reference features for a record's stimulus, recomputed deterministically.
struct StimulusTargets {
    Tensor latent;  // [C, h, w]
    Tensor e_img;   // [D]
    Tensor e_cap;   // [D]
};
StimulusTargets stimulus_targets(const Codec& codec, const VoxelRecord& rec, std::size_t image_hw);

}  // namespace vxr
