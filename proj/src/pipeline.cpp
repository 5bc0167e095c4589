#include "vxr/pipeline.hpp"

#include "vxr/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace vxr {

namespace {

void check_known_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                      const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return key == k; }) == known.end())
            throw std::invalid_argument("unknown key \"" + key + "\" in " + where);
    }
}

}  // namespace

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["dataset"] = dataset.to_json();
    j["hidden"] = hidden;
    j["blocks"] = blocks;
    j["dropout"] = dropout;
    j["epochs"] = epochs;
    j["batch"] = batch;
    j["lr"] = lr;
    j["denoiser_steps"] = denoiser_steps;
    j["denoiser_batch"] = denoiser_batch;
    j["denoiser_lr"] = denoiser_lr;
    j["schedule_steps"] = schedule_steps;
    j["beta_start"] = beta_start;
    j["beta_end"] = beta_end;
    j["strength"] = strength;
    j["seed"] = seed;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    check_known_keys(j,
                     {"dataset", "hidden", "blocks", "dropout", "epochs", "batch", "lr",
                      "denoiser_steps", "denoiser_batch", "denoiser_lr", "schedule_steps",
                      "beta_start", "beta_end", "strength", "seed"},
                     "experiment config");
    ExperimentConfig c;
    if (j.contains("dataset")) c.dataset = DatasetConfig::from_json(j.at("dataset"));
    c.hidden = j.value("hidden", c.hidden);
    c.blocks = j.value("blocks", c.blocks);
    c.dropout = j.value("dropout", c.dropout);
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.denoiser_steps = j.value("denoiser_steps", c.denoiser_steps);
    c.denoiser_batch = j.value("denoiser_batch", c.denoiser_batch);
    c.denoiser_lr = j.value("denoiser_lr", c.denoiser_lr);
    c.schedule_steps = j.value("schedule_steps", c.schedule_steps);
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
    c.strength = j.value("strength", c.strength);
    c.seed = j.value("seed", c.seed);
    if (c.strength <= 0.0 || c.strength > 1.0)
        throw std::invalid_argument("strength must be in (0, 1]");
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config " + path.string());
    nlohmann::json j;
    is >> j;
    return ExperimentConfig::from_json(j);
}

StructuralGeneratorConfig ExperimentConfig::sg_config() const {
    StructuralGeneratorConfig c;
    c.voxel_dim = dataset.v_spatial;
    c.hidden = hidden;
    c.blocks = blocks;
    c.dropout = dropout;
    const std::size_t latent_hw = dataset.image_hw / Codec::kDownsample;
    c.upsample_stages = 2;
    if (latent_hw % (1u << c.upsample_stages) != 0)
        throw std::invalid_argument("image_hw incompatible with the generator's upsample stack");
    c.base_hw = latent_hw >> c.upsample_stages;
    return c;
}

SemanticExtractorConfig ExperimentConfig::se_config() const {
    SemanticExtractorConfig c;
    c.voxel_dim = dataset.v_semantic;
    c.hidden = hidden;
    c.blocks = blocks;
    c.dropout = dropout;
    c.embed_dim = dataset.embed_dim;
    return c;
}

ToyDenoiserConfig ExperimentConfig::denoiser_config() const {
    ToyDenoiserConfig c;
    c.latent_hw = dataset.image_hw / Codec::kDownsample;
    c.embed_dim = dataset.embed_dim;
    return c;
}

AblationMode ablation_from_string(const std::string& s) {
    if (s == "full") return AblationMode::Full;
    if (s == "only_z") return AblationMode::OnlyZ;
    if (s == "no_ecap") return AblationMode::NoEcap;
    if (s == "no_eimg") return AblationMode::NoEimg;
    if (s == "no_z") return AblationMode::NoZ;
    throw std::invalid_argument("unknown ablation mode \"" + s +
                                "\" (expected full|only_z|no_ecap|no_eimg|no_z)");
}

std::string to_string(AblationMode m) {
    switch (m) {
        case AblationMode::Full: return "full";
        case AblationMode::OnlyZ: return "only_z";
        case AblationMode::NoEcap: return "no_ecap";
        case AblationMode::NoEimg: return "no_eimg";
        case AblationMode::NoZ: return "no_z";
    }
    return "?";
}

ReconstructionConfig recon_config_for(AblationMode m, double strength) {
    ReconstructionConfig rc;
    rc.strength = strength;
    switch (m) {
        case AblationMode::Full:
            rc.cond_mode = CondMode::Both;
            rc.init_mode = InitMode::StructuralPrior;
            break;
        case AblationMode::OnlyZ:
            rc.cond_mode = CondMode::None;
            rc.init_mode = InitMode::StructuralPrior;
            break;
        case AblationMode::NoEcap:
            rc.cond_mode = CondMode::ImageOnly;
            rc.init_mode = InitMode::StructuralPrior;
            break;
        case AblationMode::NoEimg:
            rc.cond_mode = CondMode::CaptionOnly;
            rc.init_mode = InitMode::StructuralPrior;
            break;
        case AblationMode::NoZ:
            rc.cond_mode = CondMode::Both;
            rc.init_mode = InitMode::Gaussian;
            break;
    }
    return rc;
}

namespace {

std::string record_stem(std::size_t id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "recon_%04zu", id);
    return buf;
}

}  // namespace

void reconstruct_split(const std::filesystem::path& out_dir, const Dataset& ds,
                       StructuralGenerator& sg, SemanticExtractor& se, ToyDenoiser& den,
                       const Codec& codec, const NoiseSchedule& sched, const ReconstructionConfig& rc,
                       std::uint64_t seed, const nlohmann::json& provenance) {
    std::filesystem::create_directories(out_dir);
    const bool img_masked = rc.cond_mode == CondMode::CaptionOnly || rc.cond_mode == CondMode::None;
    const bool cap_masked = rc.cond_mode == CondMode::ImageOnly || rc.cond_mode == CondMode::None;
    const Rng root(seed);
    for (const auto& rec : ds.test) {
        Rng rng = root.fork(rec.id);
        const ReconstructionResult res =
            reconstruct(rec.v_spatial, rec.v_semantic, sg, se, den, codec, sched, rc, rng);
        const std::string stem = record_stem(rec.id);
        save_ppm(out_dir / (stem + ".ppm"), res.image.pixels);
        const Tensor e_img = img_masked ? Tensor(res.embeddings.e_img.shape()) : res.embeddings.e_img;
        const Tensor e_cap = cap_masked ? Tensor(res.embeddings.e_cap.shape()) : res.embeddings.e_cap;
        save_vxd(out_dir / (stem + "_eimg.vxd"), e_img);
        save_vxd(out_dir / (stem + "_ecap.vxd"), e_cap);

        nlohmann::json side;
        side["record"] = rec.id;
        side["stimulus"] = rec.stimulus_id;
        side["seed"] = seed;
        side["strength"] = rc.strength;
        side["cond_mode"] = to_string(rc.cond_mode);
        side["init_mode"] = rc.init_mode == InitMode::StructuralPrior ? "structural_prior" : "gaussian";
        side["tau"] = res.tau;
        side["provenance"] = provenance;
        std::ofstream os(out_dir / (stem + ".json"));
        if (!os) throw std::runtime_error("cannot write sidecar in " + out_dir.string());
        os << side.dump(2) << "\n";
    }
}

MetricReport evaluate_reconstructions(const std::filesystem::path& recon_dir, const Dataset& ds,
                                      const Codec& codec) {
    std::vector<std::size_t> missing;
    for (const auto& rec : ds.test)
        if (!std::filesystem::exists(recon_dir / (record_stem(rec.id) + ".ppm")))
            missing.push_back(rec.id);
    if (!missing.empty()) {
        std::string ids;
        for (std::size_t id : missing) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
        throw MissingArtifactError("missing reconstructions for test records: " + ids);
    }

    std::vector<Image> recons, targets;
    std::vector<Tensor> pred_img, pred_cap, true_img, true_cap;
    for (const auto& rec : ds.test) {
        const std::string stem = record_stem(rec.id);
        recons.emplace_back(load_ppm(recon_dir / (stem + ".ppm")));
        targets.push_back(gen_stimulus(rec.attrs, ds.config.image_hw));
        pred_img.push_back(load_vxd(recon_dir / (stem + "_eimg.vxd")));
        pred_cap.push_back(load_vxd(recon_dir / (stem + "_ecap.vxd")));
        true_img.push_back(codec.clip_image_embed(targets.back()));
        true_cap.push_back(codec.clip_text_embed(rec.attrs));
    }
    const FeatureFn features = [&](const Image& im) { return codec.clip_image_embed(im); };
    MetricReport r = evaluate_images(recons, targets, features, {}, {});
    r.embedding_top1 = 0.5 * (embedding_retrieval(pred_img, true_img, 1) +
                              embedding_retrieval(pred_cap, true_cap, 1));
    return r;
}

std::vector<AblationRow> run_ablation(const std::filesystem::path& out_dir, const Dataset& ds,
                                      StructuralGenerator& sg, SemanticExtractor& se, ToyDenoiser& den,
                                      const Codec& codec, const NoiseSchedule& sched, double strength,
                                      std::uint64_t seed, const nlohmann::json& provenance) {
    std::vector<AblationRow> rows;
    for (AblationMode mode : kAblationOrder) {
        const std::string name = to_string(mode);
        const auto dir = out_dir / artifacts::kReconDir / name;
        reconstruct_split(dir, ds, sg, se, den, codec, sched, recon_config_for(mode, strength), seed,
                          provenance);
        AblationRow row;
        row.mode = mode;
        row.report = evaluate_reconstructions(dir, ds, codec);
        write_report_csv(out_dir / ("report_" + name + ".csv"), row.report);
        rows.push_back(std::move(row));
    }
    write_ablation_table(out_dir, rows);
    return rows;
}

void write_ablation_table(const std::filesystem::path& out_dir, const std::vector<AblationRow>& rows) {
    {
        std::ofstream os(out_dir / "ablation.csv");
        if (!os) throw std::runtime_error("cannot write ablation.csv in " + out_dir.string());
        os << "mode,pixcorr,ssim,two_way_pct,embedding_top1\n";
        for (const auto& row : rows)
            os << to_string(row.mode) << "," << row.report.pixcorr << "," << row.report.ssim << ","
               << row.report.two_way_pct << "," << row.report.embedding_top1 << "\n";
    }
    {
        std::ofstream os(out_dir / "ablation.md");
        if (!os) throw std::runtime_error("cannot write ablation.md in " + out_dir.string());
        os << "| Config | PixCorr | SSIM | TwoWay% | EmbTop1 |\n";
        os << "|---|---|---|---|---|\n";
        for (const auto& row : rows)
            os << "| " << to_string(row.mode) << " | " << row.report.pixcorr << " | " << row.report.ssim
               << " | " << row.report.two_way_pct << " | " << row.report.embedding_top1 << " |\n";
    }
}

InterpretResult interpret_checkpoint(const std::filesystem::path& ckpt, const RoiMask& mask) {
    const Tensor W = checkpoint_first_layer_weight(ckpt);  // [hidden, V]
    if (W.rank() != 2)
        throw ShapeError("interpret: first checkpoint parameter is not a weight matrix");
    const std::size_t hidden = W.dim(0), V = W.dim(1);
    if (V != mask.popcount())
        throw ShapeError("interpret: weight columns (" + std::to_string(V) +
                         ") do not match ROI size (" + std::to_string(mask.popcount()) + ")");
    InterpretResult r;
    r.column_norms.resize(V, 0.0);
    for (std::size_t j = 0; j < V; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hidden; ++i) acc += W.at2(i, j) * W.at2(i, j);
        r.column_norms[j] = std::sqrt(acc);
    }
    r.volume = roi_scatter(r.column_norms, mask);
    return r;
}

void write_interpret(const std::filesystem::path& out_dir, const std::string& stem,
                     const InterpretResult& r) {
    std::filesystem::create_directories(out_dir);
    save_vxd(out_dir / (stem + ".vxd"), r.volume);
    std::ofstream os(out_dir / (stem + ".csv"));
    if (!os) throw std::runtime_error("cannot write " + stem + ".csv in " + out_dir.string());
    os << "voxel,contribution\n";
    for (std::size_t j = 0; j < r.column_norms.size(); ++j) os << j << "," << r.column_norms[j] << "\n";
}

}  // namespace vxr
