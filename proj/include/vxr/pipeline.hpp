#pragma once

#include "vxr/diffusion.hpp"
#include "vxr/metrics.hpp"
#include "vxr/synth.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace vxr {

// One knob set for a whole experiment directory: dataset synthesis, all
// three training runs, the schedule, and the sampler. JSON round-trips
// losslessly; unknown keys are rejected.
struct ExperimentConfig {
    DatasetConfig dataset;
    std::size_t hidden = 256;
    std::size_t blocks = 2;
    double dropout = 0.1;
    std::size_t epochs = 200;
    std::size_t batch = 30;
    double lr = 1e-3;
    std::size_t denoiser_steps = 8000;
    std::size_t denoiser_batch = 16;
    double denoiser_lr = 1e-3;
    std::size_t schedule_steps = 50;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double strength = 0.75;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);

    StructuralGeneratorConfig sg_config() const;
    SemanticExtractorConfig se_config() const;
    ToyDenoiserConfig denoiser_config() const;
    NoiseSchedule schedule() const { return make_schedule(schedule_steps, beta_start, beta_end); }
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// A required input file (dataset, checkpoint, reconstruction) is absent.
struct MissingArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The five conditioning/initialization configurations of the ablation
// table, in their fixed row order.
enum class AblationMode { Full, OnlyZ, NoEcap, NoEimg, NoZ };

constexpr AblationMode kAblationOrder[5] = {AblationMode::Full, AblationMode::OnlyZ,
                                            AblationMode::NoEcap, AblationMode::NoEimg,
                                            AblationMode::NoZ};

AblationMode ablation_from_string(const std::string& s);
std::string to_string(AblationMode m);
ReconstructionConfig recon_config_for(AblationMode m, double strength);

// Canonical file names inside an experiment directory.
namespace artifacts {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kDatasetDir = "dataset";
inline constexpr const char* kStructural = "structural.ckpt";
inline constexpr const char* kSemantic = "semantic.ckpt";
inline constexpr const char* kDenoiser = "denoiser.ckpt";
inline constexpr const char* kReconDir = "recon";
}  // namespace artifacts

// Reconstructs every test record into out_dir: per record a PPM image, the
// two predicted-embedding VXDs (zeroed when that modality is masked), and
// a JSON sidecar with the sampler settings, tau, per-record seed, and
// checkpoint fingerprints.
void reconstruct_split(const std::filesystem::path& out_dir, const Dataset& ds,
                       StructuralGenerator& sg, SemanticExtractor& se, ToyDenoiser& den,
                       const Codec& codec, const NoiseSchedule& sched, const ReconstructionConfig& rc,
                       std::uint64_t seed, const nlohmann::json& provenance);

// Reads a reconstruction directory back and scores it against the dataset's
// test stimuli. The two-way feature extractor is the codec's image
// embedding; embedding_top1 averages image/caption retrieval.
MetricReport evaluate_reconstructions(const std::filesystem::path& recon_dir, const Dataset& ds,
                                      const Codec& codec);

struct AblationRow {
    AblationMode mode;
    MetricReport report;
};

// Runs reconstruct + evaluate for all five modes; writes per-mode artifact
// directories plus ablation.csv / ablation.md into out_dir.
std::vector<AblationRow> run_ablation(const std::filesystem::path& out_dir, const Dataset& ds,
                                      StructuralGenerator& sg, SemanticExtractor& se, ToyDenoiser& den,
                                      const Codec& codec, const NoiseSchedule& sched, double strength,
                                      std::uint64_t seed, const nlohmann::json& provenance);

void write_ablation_table(const std::filesystem::path& out_dir, const std::vector<AblationRow>& rows);

// Per-voxel contribution map: L2 norm of each input column of a
// checkpoint's first-layer weights, scattered through the ROI mask into the
// 3-D grid volume.
struct InterpretResult {
    std::vector<double> column_norms;  // one per masked voxel, scan order
    Tensor volume;                     // [grid...], zero off the mask
};

InterpretResult interpret_checkpoint(const std::filesystem::path& ckpt, const RoiMask& mask);
void write_interpret(const std::filesystem::path& out_dir, const std::string& stem,
                     const InterpretResult& r);

}  // namespace vxr
