#include "vxr/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vxr {

using nn::Mode;

// ------------------------------------------------------------ DenseTrunk

DenseTrunk::DenseTrunk(std::size_t in_dim, std::size_t hidden, std::size_t num_blocks, double dropout,
                       Rng& rng)
    : input(in_dim, hidden, rng), norm(hidden), drop(dropout) {
    blocks.reserve(num_blocks);
    for (std::size_t i = 0; i < num_blocks; ++i) blocks.emplace_back(hidden, dropout, rng);
}

Tensor DenseTrunk::forward(const Tensor& x, Mode mode, Rng* rng) {
    Tensor h = input.forward(x, mode, rng);
    h = norm.forward(h, mode, rng);
    h = act.forward(h, mode, rng);
    h = drop.forward(h, mode, rng);
    for (auto& b : blocks) h = b.forward(h, mode, rng);
    return h;
}

Tensor DenseTrunk::backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g = it->backward(g);
    g = drop.backward(g);
    g = act.backward(g);
    g = norm.backward(g);
    return input.backward(g);
}

std::vector<Tensor*> DenseTrunk::params() {
    std::vector<Tensor*> ps = {&input.W, &input.b, &norm.gamma, &norm.beta};
    for (auto& b : blocks)
        for (Tensor* p : b.params()) ps.push_back(p);
    return ps;
}

std::vector<Tensor*> DenseTrunk::grads() {
    std::vector<Tensor*> gs = {&input.gW, &input.gb, &norm.ggamma, &norm.gbeta};
    for (auto& b : blocks)
        for (Tensor* g : b.grads()) gs.push_back(g);
    return gs;
}

// -------------------------------------------------- StructuralGenerator

StructuralGenerator::StructuralGenerator(StructuralGeneratorConfig cfg, std::uint64_t init_seed)
    : cfg_(cfg),
      trunk_([&] {
          Rng rng(init_seed);
          return DenseTrunk(cfg.voxel_dim, cfg.hidden, cfg.blocks, cfg.dropout, rng);
      }()),
      proj_([&] {
          Rng rng(Rng(init_seed).fork(1).seed());
          return nn::Linear(cfg.hidden, cfg.latent_ch * cfg.base_hw * cfg.base_hw, rng);
      }()),
      gnorm_(cfg.latent_ch, cfg.latent_ch),
      ups_(cfg.upsample_stages) {}

Tensor StructuralGenerator::forward_batch(const Tensor& v, Mode mode, Rng* rng) {
    if (v.rank() != 2 || v.dim(1) != cfg_.voxel_dim)
        throw ShapeError("structural generator: voxel batch " + shape_str(v.shape()) + " expects dim " +
                         std::to_string(cfg_.voxel_dim));
    Tensor h = trunk_.forward(v, mode, rng);
    h = proj_.forward(h, mode, rng);
    h = h.reshaped({v.dim(0), cfg_.latent_ch, cfg_.base_hw, cfg_.base_hw});
    h = gnorm_.forward(h, mode, rng);
    for (auto& up : ups_) h = up.forward(h, mode, rng);
    return h;
}

Tensor StructuralGenerator::backward_batch(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = ups_.rbegin(); it != ups_.rend(); ++it) g = it->backward(g);
    g = gnorm_.backward(g);
    g = g.reshaped({g.dim(0), cfg_.latent_ch * cfg_.base_hw * cfg_.base_hw});
    g = proj_.backward(g);
    return trunk_.backward(g);
}

LatentPrior StructuralGenerator::forward(const Tensor& v_spatial) {
    if (v_spatial.rank() != 1)
        throw ShapeError("structural generator: expected rank-1 voxel vector, got " +
                         shape_str(v_spatial.shape()));
    const Tensor out = forward_batch(v_spatial.reshaped({1, v_spatial.size()}), Mode::Eval, nullptr);
    return {out.reshaped({cfg_.latent_ch, cfg_.latent_hw(), cfg_.latent_hw()})};
}

std::vector<Tensor*> StructuralGenerator::params() {
    std::vector<Tensor*> ps = trunk_.params();
    ps.push_back(&proj_.W);
    ps.push_back(&proj_.b);
    ps.push_back(&gnorm_.gamma);
    ps.push_back(&gnorm_.beta);
    return ps;
}

std::vector<Tensor*> StructuralGenerator::grads() {
    std::vector<Tensor*> gs = trunk_.grads();
    gs.push_back(&proj_.gW);
    gs.push_back(&proj_.gb);
    gs.push_back(&gnorm_.ggamma);
    gs.push_back(&gnorm_.gbeta);
    return gs;
}

void StructuralGenerator::zero_grads() {
    for (Tensor* g : grads()) std::fill(g->data().begin(), g->data().end(), 0.0);
}

// ---------------------------------------------------- SemanticExtractor

SemanticExtractor::SemanticExtractor(SemanticExtractorConfig cfg, std::uint64_t init_seed)
    : cfg_(cfg),
      trunk_([&] {
          Rng rng(init_seed);
          return DenseTrunk(cfg.voxel_dim, cfg.hidden, cfg.blocks, cfg.dropout, rng);
      }()),
      head_img_([&] {
          Rng rng(Rng(init_seed).fork(1).seed());
          return nn::Linear(cfg.hidden, cfg.embed_dim, rng);
      }()),
      head_cap_([&] {
          Rng rng(Rng(init_seed).fork(2).seed());
          return nn::Linear(cfg.hidden, cfg.embed_dim, rng);
      }()) {}

SemanticExtractor::BatchOut SemanticExtractor::forward_batch(const Tensor& v, Mode mode, Rng* rng) {
    if (v.rank() != 2 || v.dim(1) != cfg_.voxel_dim)
        throw ShapeError("semantic extractor: voxel batch " + shape_str(v.shape()) + " expects dim " +
                         std::to_string(cfg_.voxel_dim));
    Tensor h = trunk_.forward(v, mode, rng);
    Tensor ei = norm_img_.forward(head_img_.forward(h, mode, rng), mode, rng);
    Tensor ec = norm_cap_.forward(head_cap_.forward(h, mode, rng), mode, rng);
    return {std::move(ei), std::move(ec)};
}

Tensor SemanticExtractor::backward_batch(const Tensor& grad_img, const Tensor& grad_cap) {
    const Tensor gi = head_img_.backward(norm_img_.backward(grad_img));
    const Tensor gc = head_cap_.backward(norm_cap_.backward(grad_cap));
    return trunk_.backward(add(gi, gc));
}

SemanticEmbeddings SemanticExtractor::forward(const Tensor& v_semantic) {
    if (v_semantic.rank() != 1)
        throw ShapeError("semantic extractor: expected rank-1 voxel vector, got " +
                         shape_str(v_semantic.shape()));
    auto out = forward_batch(v_semantic.reshaped({1, v_semantic.size()}), Mode::Eval, nullptr);
    return {out.e_img.reshaped({cfg_.embed_dim}), out.e_cap.reshaped({cfg_.embed_dim})};
}

std::vector<Tensor*> SemanticExtractor::params() {
    std::vector<Tensor*> ps = trunk_.params();
    ps.push_back(&head_img_.W);
    ps.push_back(&head_img_.b);
    ps.push_back(&head_cap_.W);
    ps.push_back(&head_cap_.b);
    return ps;
}

std::vector<Tensor*> SemanticExtractor::grads() {
    std::vector<Tensor*> gs = trunk_.grads();
    gs.push_back(&head_img_.gW);
    gs.push_back(&head_img_.gb);
    gs.push_back(&head_cap_.gW);
    gs.push_back(&head_cap_.gb);
    return gs;
}

void SemanticExtractor::zero_grads() {
    for (Tensor* g : grads()) std::fill(g->data().begin(), g->data().end(), 0.0);
}

// -------------------------------------------------------------- Training

namespace {

Tensor stack_rows(const std::vector<Tensor>& items, const std::vector<std::size_t>& idx) {
    const std::size_t d = items.front().size();
    Tensor out({idx.size(), d});
    for (std::size_t n = 0; n < idx.size(); ++n)
        std::copy(items[idx[n]].data().begin(), items[idx[n]].data().end(),
                  out.data().begin() + (long)(n * d));
    return out;
}

Tensor stack_latents(const std::vector<Tensor>& items, const std::vector<std::size_t>& idx) {
    const Shape& s = items.front().shape();
    Tensor out({idx.size(), s[0], s[1], s[2]});
    const std::size_t m = items.front().size();
    for (std::size_t n = 0; n < idx.size(); ++n)
        std::copy(items[idx[n]].data().begin(), items[idx[n]].data().end(),
                  out.data().begin() + (long)(n * m));
    return out;
}

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), (std::size_t)0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

void require_nonempty(std::size_t n) {
    if (n == 0) throw ShapeError("training dataset is empty");
}

void abort_on_nan(double loss) {
    if (!std::isfinite(loss)) throw ValueError("training aborted: non-finite loss " + std::to_string(loss));
}

}  // namespace

TrainLog train_structural(StructuralGenerator& model, const std::vector<Tensor>& voxels,
                          const std::vector<Tensor>& latents, const TrainConfig& tc) {
    require_nonempty(voxels.size());
    if (voxels.size() != latents.size())
        throw ShapeError("train_structural: voxel/latent count mismatch");
    Rng rng(tc.seed);
    nn::Adam opt;
    opt.lr = tc.lr;
    opt.attach(model.params());
    TrainLog log;
    // A unit-weight pixel+edge composite makes the edge term dominate the
    // gradient field and drives every prediction toward one shared smooth
    // pattern (the edge penalty prefers a single low-gradient output over
    // per-sample detail). Training therefore warms up on the pixel term
    // alone, then adds the edge term at a weight small enough to refine
    // boundaries without erasing input dependence. The reported epoch loss
    // stays the unit-weight composite so logs remain comparable.
    const std::size_t warmup_epochs = (tc.epochs * 9) / 10;
    constexpr double kEdgeWeight = 1e-4;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        const bool with_edges = epoch >= warmup_epochs;
        const auto order = shuffled_order(voxels.size(), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t ofs = 0; ofs < order.size(); ofs += tc.batch) {
            const std::size_t n = std::min(tc.batch, order.size() - ofs);
            const std::vector<std::size_t> idx(order.begin() + (long)ofs, order.begin() + (long)(ofs + n));
            const Tensor vb = stack_rows(voxels, idx);
            const Tensor zb = stack_latents(latents, idx);
            model.zero_grads();
            const Tensor pred = model.forward_batch(vb, Mode::Train, &rng);
            const double loss = structural_loss(pred, zb);
            abort_on_nan(loss);
            Tensor grad = mse_loss_grad(pred, zb);
            if (with_edges) {
                const Tensor edge_grad = sobel_loss_grad(pred, zb);
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += kEdgeWeight * edge_grad[i];
            }
            model.backward_batch(grad);
            opt.step(model.params(), model.grads());
            epoch_loss += loss;
            ++batches;
        }
        log.epoch_loss.push_back(epoch_loss / (double)batches);
    }
    return log;
}

TrainLog train_semantic(SemanticExtractor& model, const std::vector<Tensor>& voxels,
                        const std::vector<Tensor>& e_img, const std::vector<Tensor>& e_cap,
                        const TrainConfig& tc, const SoftClipConfig& scc) {
    require_nonempty(voxels.size());
    if (voxels.size() != e_img.size() || voxels.size() != e_cap.size())
        throw ShapeError("train_semantic: dataset column count mismatch");
    Rng rng(tc.seed);
    nn::Adam opt;
    opt.lr = tc.lr;
    opt.attach(model.params());
    TrainLog log;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        const auto order = shuffled_order(voxels.size(), rng);
        double li = 0.0, lc = 0.0;
        std::size_t batches = 0;
        for (std::size_t ofs = 0; ofs < order.size(); ofs += tc.batch) {
            const std::size_t n = std::min(tc.batch, order.size() - ofs);
            const std::vector<std::size_t> idx(order.begin() + (long)ofs, order.begin() + (long)(ofs + n));
            const Tensor vb = stack_rows(voxels, idx);
            const Tensor ti = stack_rows(e_img, idx);
            const Tensor tcap = stack_rows(e_cap, idx);
            model.zero_grads();
            auto out = model.forward_batch(vb, Mode::Train, &rng);
            const auto losses = semantic_losses(out.e_img, out.e_cap, ti, tcap, scc);
            abort_on_nan(losses.img + losses.cap);
            model.backward_batch(semantic_loss_grad_img(out.e_img, ti, scc),
                                 semantic_loss_grad_cap(out.e_cap, tcap, scc));
            opt.step(model.params(), model.grads());
            li += losses.img;
            lc += losses.cap;
            ++batches;
        }
        log.epoch_loss_img.push_back(li / (double)batches);
        log.epoch_loss_cap.push_back(lc / (double)batches);
        log.epoch_loss.push_back((li + lc) / (double)batches);
    }
    return log;
}

// ------------------------------------------------------------ Checkpoints

namespace {

std::vector<std::pair<std::string, const Tensor*>> named_params(std::vector<Tensor*> ps) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) out.emplace_back("p" + std::to_string(i), ps[i]);
    return out;
}

void restore_params(std::vector<Tensor*> ps, const std::map<std::string, Tensor>& tensors) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const Tensor& src = tensors.at("p" + std::to_string(i));
        if (!src.same_shape(*ps[i]))
            throw ShapeError("checkpoint parameter p" + std::to_string(i) + " shape " +
                             shape_str(src.shape()) + " does not match model " + shape_str(ps[i]->shape()));
        *ps[i] = src;
    }
}

}  // namespace

void save_structural(const std::filesystem::path& path, const StructuralGenerator& model,
                     const nlohmann::json& extra) {
    auto& m = const_cast<StructuralGenerator&>(model);
    const auto& c = model.config();
    nlohmann::json meta = extra.is_null() ? nlohmann::json::object() : extra;
    meta["model"] = "structural";
    meta["config"] = {{"voxel_dim", c.voxel_dim}, {"hidden", c.hidden},
                      {"blocks", c.blocks},       {"dropout", c.dropout},
                      {"latent_ch", c.latent_ch}, {"base_hw", c.base_hw},
                      {"upsample_stages", c.upsample_stages}};
    nn::save_checkpoint(path, meta, named_params(m.params()));
}

StructuralGenerator load_structural(const std::filesystem::path& path) {
    auto [meta, tensors] = nn::load_checkpoint(path);
    if (meta.value("model", "") != "structural")
        throw std::runtime_error("not a structural checkpoint: " + path.string());
    const auto& c = meta.at("config");
    StructuralGeneratorConfig cfg;
    cfg.voxel_dim = c.at("voxel_dim");
    cfg.hidden = c.at("hidden");
    cfg.blocks = c.at("blocks");
    cfg.dropout = c.at("dropout");
    cfg.latent_ch = c.at("latent_ch");
    cfg.base_hw = c.at("base_hw");
    cfg.upsample_stages = c.at("upsample_stages");
    StructuralGenerator model(cfg, 0);
    restore_params(model.params(), tensors);
    return model;
}

void save_semantic(const std::filesystem::path& path, const SemanticExtractor& model,
                   const nlohmann::json& extra) {
    auto& m = const_cast<SemanticExtractor&>(model);
    const auto& c = model.config();
    nlohmann::json meta = extra.is_null() ? nlohmann::json::object() : extra;
    meta["model"] = "semantic";
    meta["config"] = {{"voxel_dim", c.voxel_dim},
                      {"hidden", c.hidden},
                      {"blocks", c.blocks},
                      {"dropout", c.dropout},
                      {"embed_dim", c.embed_dim}};
    nn::save_checkpoint(path, meta, named_params(m.params()));
}

SemanticExtractor load_semantic(const std::filesystem::path& path) {
    auto [meta, tensors] = nn::load_checkpoint(path);
    if (meta.value("model", "") != "semantic")
        throw std::runtime_error("not a semantic checkpoint: " + path.string());
    const auto& c = meta.at("config");
    SemanticExtractorConfig cfg;
    cfg.voxel_dim = c.at("voxel_dim");
    cfg.hidden = c.at("hidden");
    cfg.blocks = c.at("blocks");
    cfg.dropout = c.at("dropout");
    cfg.embed_dim = c.at("embed_dim");
    SemanticExtractor model(cfg, 0);
    restore_params(model.params(), tensors);
    return model;
}

Tensor checkpoint_first_layer_weight(const std::filesystem::path& path) {
    auto [meta, tensors] = nn::load_checkpoint(path);
    const Tensor& w = tensors.at("p0");
    if (w.rank() != 2)
        throw std::runtime_error("checkpoint first layer is not a linear weight matrix: " + path.string());
    return w;
}

}  // namespace vxr
