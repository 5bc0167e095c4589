// Command-line workflow: synth -> train (x3) -> reconstruct -> evaluate,
// plus the ablation matrix, voxel contribution maps, and the gradient
// checker. Every command is a pure function of (config, artifacts, seed).

#include "vxr/gradcheck.hpp"
#include "vxr/io.hpp"
#include "vxr/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace vxr;

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kMissingArtifact = 3;
constexpr int kNumericalFailure = 4;

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

ExperimentConfig resolve_config(const CommonOpts& o) {
    ExperimentConfig cfg;
    if (!o.config_path.empty()) {
        cfg = load_experiment_config(o.config_path);
    } else {
        const auto saved = std::filesystem::path(o.out_dir) / artifacts::kConfig;
        if (std::filesystem::exists(saved)) cfg = load_experiment_config(saved);
    }
    if (o.seed_set) {
        cfg.seed = o.seed;
        cfg.dataset.seed = o.seed;
    }
    return cfg;
}

void write_config(const std::filesystem::path& dir, const ExperimentConfig& cfg) {
    std::ofstream os(dir / artifacts::kConfig);
    if (!os) throw std::runtime_error("cannot write config in " + dir.string());
    os << cfg.to_json().dump(2) << "\n";
}

Dataset require_dataset(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    const auto dir = out / artifacts::kDatasetDir;
    if (!std::filesystem::exists(dir / "manifest.json"))
        throw MissingArtifactError("no dataset at " + dir.string() + "; run `synth` first");
    Dataset ds = load_dataset(dir);
    if (ds.config.to_json() != cfg.dataset.to_json())
        throw std::invalid_argument("dataset on disk was built from a different config");
    return ds;
}

std::filesystem::path require_file(const std::filesystem::path& p, const std::string& hint) {
    if (!std::filesystem::exists(p)) throw MissingArtifactError("missing " + p.string() + "; " + hint);
    return p;
}

void write_loss_csv(const std::filesystem::path& path, const TrainLog& log) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    const bool semantic = !log.epoch_loss_img.empty();
    os << (semantic ? "epoch,loss,loss_img,loss_cap\n" : "epoch,loss\n");
    for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
        os << e << "," << log.epoch_loss[e];
        if (semantic) os << "," << log.epoch_loss_img[e] << "," << log.epoch_loss_cap[e];
        os << "\n";
    }
}

int cmd_synth(const CommonOpts& o) {
    ExperimentConfig cfg = resolve_config(o);
    std::filesystem::create_directories(o.out_dir);
    write_config(o.out_dir, cfg);
    const Dataset ds = build_dataset(cfg.dataset);
    save_dataset(std::filesystem::path(o.out_dir) / artifacts::kDatasetDir, ds);
    std::cout << "dataset: " << ds.train.size() << " train + " << ds.test.size() << " test records\n";
    return kOk;
}

int cmd_train(const CommonOpts& o, const std::string& which, const std::string& resume) {
    ExperimentConfig cfg = resolve_config(o);
    const std::filesystem::path out(o.out_dir);
    const Dataset ds = require_dataset(cfg, out);
    const Codec codec = dataset_codec(cfg.dataset);
    const Rng root(cfg.seed);

    std::vector<Tensor> voxels_s, voxels_m, latents, e_img, e_cap;
    for (const auto& rec : ds.train) {
        const StimulusTargets t = stimulus_targets(codec, rec, cfg.dataset.image_hw);
        voxels_s.push_back(rec.v_spatial);
        voxels_m.push_back(rec.v_semantic);
        latents.push_back(t.latent);
        e_img.push_back(t.e_img);
        e_cap.push_back(t.e_cap);
    }

    if (which == "structural") {
        StructuralGenerator model = resume.empty()
                                        ? StructuralGenerator(cfg.sg_config(), root.fork(200).seed())
                                        : load_structural(require_file(resume, "checkpoint to resume"));
        TrainConfig tc{cfg.epochs, cfg.batch, cfg.lr, root.fork(210).seed()};
        const TrainLog log = train_structural(model, voxels_s, latents, tc);
        save_structural(out / artifacts::kStructural, model, {{"seed", cfg.seed}});
        write_loss_csv(out / "structural_loss.csv", log);
        std::cout << "structural: loss " << log.initial() << " -> " << log.final_loss() << "\n";
    } else if (which == "semantic") {
        SemanticExtractor model = resume.empty()
                                      ? SemanticExtractor(cfg.se_config(), root.fork(201).seed())
                                      : load_semantic(require_file(resume, "checkpoint to resume"));
        TrainConfig tc{cfg.epochs, cfg.batch, cfg.lr, root.fork(211).seed()};
        const TrainLog log = train_semantic(model, voxels_m, e_img, e_cap, tc);
        save_semantic(out / artifacts::kSemantic, model, {{"seed", cfg.seed}});
        write_loss_csv(out / "semantic_loss.csv", log);
        std::cout << "semantic: loss " << log.initial() << " -> " << log.final_loss() << "\n";
    } else if (which == "denoiser") {
        ToyDenoiser model = resume.empty()
                                ? ToyDenoiser(cfg.denoiser_config(), root.fork(202).seed())
                                : load_denoiser(require_file(resume, "checkpoint to resume"));
        DenoiserTrainConfig tc{cfg.denoiser_steps, cfg.denoiser_batch, cfg.denoiser_lr,
                               root.fork(212).seed()};
        const DenoiserTrainLog log = train_denoiser(model, latents, e_img, e_cap, cfg.schedule(), tc);
        save_denoiser(out / artifacts::kDenoiser, model, {{"seed", cfg.seed}});
        std::ofstream os(out / "denoiser_loss.csv");
        os << "interval,loss\n";
        for (std::size_t i = 0; i < log.loss.size(); ++i) os << i << "," << log.loss[i] << "\n";
        std::cout << "denoiser: loss " << log.initial << " -> " << log.final_loss << "\n";
    } else {
        throw std::invalid_argument("unknown training target \"" + which +
                                    "\" (expected structural|semantic|denoiser)");
    }
    return kOk;
}

nlohmann::json checkpoint_provenance(const std::filesystem::path& out) {
    return {{"structural", fingerprint_file(out / artifacts::kStructural)},
            {"semantic", fingerprint_file(out / artifacts::kSemantic)},
            {"denoiser", fingerprint_file(out / artifacts::kDenoiser)}};
}

struct LoadedModels {
    StructuralGenerator sg;
    SemanticExtractor se;
    ToyDenoiser den;
};

LoadedModels load_models(const std::filesystem::path& out) {
    return {load_structural(require_file(out / artifacts::kStructural, "run `train structural`")),
            load_semantic(require_file(out / artifacts::kSemantic, "run `train semantic`")),
            load_denoiser(require_file(out / artifacts::kDenoiser, "run `train denoiser`"))};
}

int cmd_reconstruct(const CommonOpts& o, const std::string& mode_str) {
    ExperimentConfig cfg = resolve_config(o);
    const std::filesystem::path out(o.out_dir);
    const Dataset ds = require_dataset(cfg, out);
    const Codec codec = dataset_codec(cfg.dataset);
    LoadedModels m = load_models(out);
    const AblationMode mode = ablation_from_string(mode_str);
    const auto dir = out / artifacts::kReconDir / to_string(mode);
    reconstruct_split(dir, ds, m.sg, m.se, m.den, codec, cfg.schedule(),
                      recon_config_for(mode, cfg.strength), Rng(cfg.seed).fork(300).seed(),
                      checkpoint_provenance(out));
    std::cout << "reconstructed " << ds.test.size() << " records into " << dir.string() << "\n";
    return kOk;
}

int cmd_evaluate(const CommonOpts& o, const std::string& mode_str) {
    ExperimentConfig cfg = resolve_config(o);
    const std::filesystem::path out(o.out_dir);
    const Dataset ds = require_dataset(cfg, out);
    const Codec codec = dataset_codec(cfg.dataset);
    const AblationMode mode = ablation_from_string(mode_str);
    const auto dir = out / artifacts::kReconDir / to_string(mode);
    const MetricReport r = evaluate_reconstructions(dir, ds, codec);
    write_report_csv(out / ("report_" + to_string(mode) + ".csv"), r);
    write_report_markdown(out / ("report_" + to_string(mode) + ".md"), r, to_string(mode));
    std::cout << to_string(mode) << ": pixcorr " << r.pixcorr << " ssim " << r.ssim << " two_way "
              << r.two_way_pct << "% emb_top1 " << r.embedding_top1 << "\n";
    return kOk;
}

int cmd_ablate(const CommonOpts& o) {
    ExperimentConfig cfg = resolve_config(o);
    const std::filesystem::path out(o.out_dir);
    const Dataset ds = require_dataset(cfg, out);
    const Codec codec = dataset_codec(cfg.dataset);
    LoadedModels m = load_models(out);
    const auto rows = run_ablation(out, ds, m.sg, m.se, m.den, codec, cfg.schedule(), cfg.strength,
                                   Rng(cfg.seed).fork(300).seed(), checkpoint_provenance(out));
    for (const auto& row : rows)
        std::cout << to_string(row.mode) << ": pixcorr " << row.report.pixcorr << " ssim "
                  << row.report.ssim << " two_way " << row.report.two_way_pct << "% emb_top1 "
                  << row.report.embedding_top1 << "\n";
    return kOk;
}

int cmd_interpret(const CommonOpts& o, const std::string& which) {
    ExperimentConfig cfg = resolve_config(o);
    const std::filesystem::path out(o.out_dir);
    const Dataset ds = require_dataset(cfg, out);
    const bool structural = which == "structural";
    if (!structural && which != "semantic")
        throw std::invalid_argument("interpret target must be structural or semantic");
    const auto ckpt = require_file(out / (structural ? artifacts::kStructural : artifacts::kSemantic),
                                   "train it first");
    const RoiMask& mask = structural ? ds.roi_spatial : ds.roi_semantic;
    const InterpretResult r = interpret_checkpoint(ckpt, mask);
    write_interpret(out, "interpret_" + which, r);
    std::cout << "wrote interpret_" << which << ".vxd / .csv (" << r.column_norms.size()
              << " voxels)\n";
    return kOk;
}

int cmd_gradcheck(std::uint64_t seed) {
    const auto cases = run_gradcheck_suite(seed);
    bool ok = true;
    for (const auto& c : cases) {
        const bool pass = c.max_rel_err < 1e-4;
        ok = ok && pass;
        std::cout << (pass ? "PASS" : "FAIL") << "  " << c.name << "  instances=" << c.instances
                  << " probes=" << c.probes << " max_rel_err=" << c.max_rel_err << "\n";
    }
    return ok ? kOk : kNumericalFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"voxel-to-image reconstruction workbench"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string which = "structural", mode = "full", resume;

    auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", o.config_path, "experiment config JSON");
        auto* out = sub->add_option("--out", o.out_dir, "experiment directory");
        if (needs_out) out->required();
        sub->add_option("--seed", o.seed, "override the config seed")->each([&](const std::string&) {
            o.seed_set = true;
        });
    };

    auto* synth = app.add_subcommand("synth", "synthesize the dataset");
    add_common(synth, true);
    auto* train = app.add_subcommand("train", "train one model");
    add_common(train, true);
    train->add_option("--which", which, "structural|semantic|denoiser")->required();
    train->add_option("--resume", resume, "checkpoint to continue from");
    auto* recon = app.add_subcommand("reconstruct", "reconstruct the test split");
    add_common(recon, true);
    recon->add_option("--mode", mode, "full|only_z|no_ecap|no_eimg|no_z");
    auto* eval = app.add_subcommand("evaluate", "score reconstructions");
    add_common(eval, true);
    eval->add_option("--mode", mode, "full|only_z|no_ecap|no_eimg|no_z");
    auto* ablate = app.add_subcommand("ablate", "run all five ablation rows");
    add_common(ablate, true);
    auto* interp = app.add_subcommand("interpret", "voxel contribution map");
    add_common(interp, true);
    interp->add_option("--which", which, "structural|semantic");
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gc->add_option("--seed", o.seed, "suite seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(o);
        if (train->parsed()) return cmd_train(o, which, resume);
        if (recon->parsed()) return cmd_reconstruct(o, mode);
        if (eval->parsed()) return cmd_evaluate(o, mode);
        if (ablate->parsed()) return cmd_ablate(o);
        if (interp->parsed()) return cmd_interpret(o, which);
        if (gc->parsed()) return cmd_gradcheck(o.seed);
    } catch (const vxr::MissingArtifactError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissingArtifact;
    } catch (const vxr::ValueError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumericalFailure;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    }
    return kOk;
}
