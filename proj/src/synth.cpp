#include "vxr/synth.hpp"

#include "vxr/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace vxr {

// --------------------------------------------------------------- RoiMask

std::size_t RoiMask::popcount() const {
    return (std::size_t)std::count(mask.begin(), mask.end(), true);
}

std::pair<RoiMask, RoiMask> make_roi_masks(const Shape& grid, std::size_t n_spatial,
                                           std::size_t n_semantic, std::uint64_t seed) {
    const std::size_t total = shape_numel(grid);
    if (n_spatial == 0 || n_semantic == 0) throw ValueError("ROI masks must be nonempty");
    if (n_spatial + n_semantic > total)
        throw ShapeError("ROI sizes " + std::to_string(n_spatial) + "+" + std::to_string(n_semantic) +
                         " exceed grid volume " + std::to_string(total));
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), (std::size_t)0);
    Rng rng(seed);
    for (std::size_t i = total; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    RoiMask spatial{grid, std::vector<bool>(total, false), "spatial"};
    RoiMask semantic{grid, std::vector<bool>(total, false), "semantic"};
    for (std::size_t i = 0; i < n_spatial; ++i) spatial.mask[order[i]] = true;
    for (std::size_t i = 0; i < n_semantic; ++i) semantic.mask[order[n_spatial + i]] = true;
    return {std::move(spatial), std::move(semantic)};
}

std::vector<double> roi_extract(const Tensor& volume, const RoiMask& mask) {
    if (volume.shape() != mask.grid)
        throw ShapeError("roi_extract: volume " + shape_str(volume.shape()) + " vs mask grid " +
                         shape_str(mask.grid));
    std::vector<double> out;
    out.reserve(mask.popcount());
    for (std::size_t i = 0; i < volume.size(); ++i)
        if (mask.mask[i]) out.push_back(volume[i]);
    return out;
}

Tensor roi_scatter(const std::vector<double>& values, const RoiMask& mask) {
    if (values.size() != mask.popcount())
        throw ShapeError("roi_scatter: " + std::to_string(values.size()) + " values vs mask popcount " +
                         std::to_string(mask.popcount()));
    Tensor vol(mask.grid);
    std::size_t k = 0;
    for (std::size_t i = 0; i < vol.size(); ++i)
        if (mask.mask[i]) vol[i] = values[k++];
    return vol;
}

// -------------------------------------------------------------- Renderer

namespace {

struct Rgb {
    double r, g, b;
};

constexpr Rgb kPalette[AttributeVector::kColors] = {
    {0.95, 0.10, 0.10}, {0.10, 0.85, 0.10}, {0.15, 0.25, 0.95}, {0.95, 0.90, 0.10},
    {0.10, 0.85, 0.90}, {0.90, 0.15, 0.90}, {0.98, 0.98, 0.98}, {0.05, 0.05, 0.05}};

// Smooth low-frequency backgrounds so block averages retain most variance.
double background_value(std::size_t bg, double u, double v) {
    switch (bg) {
        case 0: return 0.20 + 0.40 * u;
        case 1: return 0.20 + 0.40 * v;
        case 2: {
            const double du = u - 0.5, dv = v - 0.5;
            return 0.58 - 0.50 * std::sqrt(du * du + dv * dv);
        }
        default: return 0.20 + 0.20 * (u + v);
    }
}

bool inside_shape(std::size_t shape, double dx, double dy, double rad) {
    switch (shape) {
        case 0: return dx * dx + dy * dy <= rad * rad;                           // circle
        case 1: return std::abs(dx) <= rad && std::abs(dy) <= rad;               // square
        case 2:                                                                  // triangle (apex up)
            return dy >= -rad && dy <= rad && std::abs(dx) <= (dy + rad) * 0.5;
        default:                                                                 // horizontal bar
            return std::abs(dx) <= rad && std::abs(dy) <= rad * 0.35;
    }
}

}  // namespace

Image gen_stimulus(const AttributeVector& attrs, std::size_t image_hw) {
    attrs.validate();
    const std::size_t n = image_hw;
    const double cell = (double)n / (double)AttributeVector::kGrid;
    const double cx = ((double)attrs.pos_col + 0.5) * cell;
    const double cy = ((double)attrs.pos_row + 0.5) * cell;
    const double rad = (attrs.scale_id == 0 ? 0.30 : 0.46) * cell;
    const Rgb color = kPalette[attrs.color_id];
    // per-channel tint keeps backgrounds distinguishable across channels
    const double tint[3] = {0.90, 1.00, 1.10};
    Tensor px({3, n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double u = ((double)j + 0.5) / (double)n;
            const double v = ((double)i + 0.5) / (double)n;
            const double bgv = background_value(attrs.background_id, u, v);
            const double dx = (double)j + 0.5 - cx, dy = (double)i + 0.5 - cy;
            const bool in = inside_shape(attrs.shape_id, dx, dy, rad);
            const double rgb[3] = {color.r, color.g, color.b};
            for (std::size_t ch = 0; ch < 3; ++ch)
                px.at3(ch, i, j) = in ? rgb[ch] : std::clamp(bgv * tint[ch], 0.0, 1.0);
        }
    return Image(quantize_ppm(px));
}

// ---------------------------------------------------------- ForwardModel

ForwardModel make_forward_model(std::size_t v_spatial, std::size_t v_semantic, std::size_t latent_numel,
                                std::size_t embed_dim, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw ValueError("forward model sigma must be >= 0");
    Rng rng(seed);
    ForwardModel fm;
    fm.w_spatial = scale(randn(rng, {v_spatial, latent_numel}), 1.0 / std::sqrt((double)latent_numel));
    fm.w_semantic = scale(randn(rng, {v_semantic, 2 * embed_dim}), 1.0 / std::sqrt((double)(2 * embed_dim)));
    fm.sigma = sigma;
    return fm;
}

VoxelRecord ForwardModel::apply(const Codec& codec, const Image& img, const AttributeVector& attrs,
                                Rng& rng) const {
    const auto enc = encode_stimulus(codec, img, attrs);
    const Tensor zf = enc.latent.z.reshaped({enc.latent.z.size(), 1});
    const Tensor ef = concat(enc.embeddings.e_img, enc.embeddings.e_cap).reshaped({2 * codec.embed_dim(), 1});
    Tensor vs = matmul(w_spatial, zf).reshaped({w_spatial.dim(0)});
    Tensor vm = matmul(w_semantic, ef).reshaped({w_semantic.dim(0)});
    if (sigma > 0.0) {
        for (std::size_t i = 0; i < vs.size(); ++i) vs[i] += sigma * rng.normal();
        for (std::size_t i = 0; i < vm.size(); ++i) vm[i] += sigma * rng.normal();
    }
    VoxelRecord rec;
    rec.stimulus_id = attrs.index();
    rec.attrs = attrs;
    rec.v_spatial = std::move(vs);
    rec.v_semantic = std::move(vm);
    return rec;
}

// --------------------------------------------------------------- Dataset

nlohmann::json DatasetConfig::to_json() const {
    return {{"train_size", train_size}, {"test_size", test_size}, {"v_spatial", v_spatial},
            {"v_semantic", v_semantic}, {"sigma", sigma},         {"seed", seed},
            {"image_hw", image_hw},     {"embed_dim", embed_dim}, {"roi_grid", roi_grid}};
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j) {
    static const char* known[] = {"train_size", "test_size", "v_spatial", "v_semantic", "sigma",
                                  "seed",       "image_hw",  "embed_dim", "roi_grid"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw std::runtime_error("unknown dataset config key: " + it.key());
    }
    DatasetConfig c;
    c.train_size = j.value("train_size", c.train_size);
    c.test_size = j.value("test_size", c.test_size);
    c.v_spatial = j.value("v_spatial", c.v_spatial);
    c.v_semantic = j.value("v_semantic", c.v_semantic);
    c.sigma = j.value("sigma", c.sigma);
    c.seed = j.value("seed", c.seed);
    c.image_hw = j.value("image_hw", c.image_hw);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    if (j.contains("roi_grid")) c.roi_grid = j.at("roi_grid").get<Shape>();
    return c;
}

Codec dataset_codec(const DatasetConfig& cfg) {
    return Codec(Rng(cfg.seed).fork(100).seed(), cfg.image_hw, cfg.embed_dim);
}

Dataset build_dataset(const DatasetConfig& cfg) {
    if (cfg.train_size < 1 || cfg.test_size < 1) throw ValueError("dataset split sizes must be >= 1");
    if (cfg.train_size + cfg.test_size > AttributeVector::kCombinations)
        throw ValueError("requested " + std::to_string(cfg.train_size + cfg.test_size) +
                         " stimuli exceed attribute grid cardinality " +
                         std::to_string(AttributeVector::kCombinations));
    Dataset ds;
    ds.config = cfg;
    const Codec codec = dataset_codec(cfg);
    const std::size_t lat_numel = shape_numel(codec.latent_shape());
    const ForwardModel fm = make_forward_model(cfg.v_spatial, cfg.v_semantic, lat_numel, cfg.embed_dim,
                                               cfg.sigma, Rng(cfg.seed).fork(101).seed());
    auto masks = make_roi_masks(cfg.roi_grid, cfg.v_spatial, cfg.v_semantic, Rng(cfg.seed).fork(102).seed());
    ds.roi_spatial = std::move(masks.first);
    ds.roi_semantic = std::move(masks.second);

    // Disjoint stimulus draw: seeded permutation of the attribute grid.
    std::vector<std::size_t> order(AttributeVector::kCombinations);
    std::iota(order.begin(), order.end(), (std::size_t)0);
    Rng perm_rng(Rng(cfg.seed).fork(103).seed());
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[perm_rng.below(i)]);

    Rng noise_root(Rng(cfg.seed).fork(104).seed());
    auto make_split = [&](std::size_t offset, std::size_t count, std::vector<VoxelRecord>& out) {
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            const AttributeVector attrs = AttributeVector::from_index(order[offset + i]);
            const Image img = gen_stimulus(attrs, cfg.image_hw);
            Rng rec_rng = noise_root.fork(offset + i);
            VoxelRecord rec = fm.apply(codec, img, attrs, rec_rng);
            rec.id = i;
            out.push_back(std::move(rec));
        }
    };
    make_split(0, cfg.train_size, ds.train);
    make_split(cfg.train_size, cfg.test_size, ds.test);
    return ds;
}

namespace {

nlohmann::json attrs_to_json(const AttributeVector& a) {
    return {{"shape", a.shape_id}, {"color", a.color_id},  {"row", a.pos_row},
            {"col", a.pos_col},    {"scale", a.scale_id},  {"background", a.background_id}};
}

AttributeVector attrs_from_json(const nlohmann::json& j) {
    AttributeVector a;
    a.shape_id = j.at("shape");
    a.color_id = j.at("color");
    a.pos_row = j.at("row");
    a.pos_col = j.at("col");
    a.scale_id = j.at("scale");
    a.background_id = j.at("background");
    a.validate();
    return a;
}

std::string record_stem(const std::string& split, std::size_t id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04zu", split.c_str(), id);
    return buf;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["config"] = ds.config.to_json();
    for (const char* split : {"train", "test"}) {
        const auto& recs = std::string(split) == "train" ? ds.train : ds.test;
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& rec : recs) {
            const std::string stem = record_stem(split, rec.id);
            save_ppm(dir / (stem + ".ppm"), gen_stimulus(rec.attrs, ds.config.image_hw).pixels);
            save_vxd(dir / (stem + "_vs.vxd"), rec.v_spatial);
            save_vxd(dir / (stem + "_vm.vxd"), rec.v_semantic);
            arr.push_back({{"id", rec.id},
                           {"stimulus_id", rec.stimulus_id},
                           {"attrs", attrs_to_json(rec.attrs)},
                           {"stem", stem}});
        }
        manifest[split] = std::move(arr);
    }
    std::ofstream os(dir / "manifest.json");
    if (!os) throw std::runtime_error("cannot write manifest in " + dir.string());
    os << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw std::runtime_error("missing manifest.json in " + dir.string());
    nlohmann::json manifest;
    is >> manifest;
    Dataset ds;
    ds.config = DatasetConfig::from_json(manifest.at("config"));
    auto masks = make_roi_masks(ds.config.roi_grid, ds.config.v_spatial, ds.config.v_semantic,
                                Rng(ds.config.seed).fork(102).seed());
    ds.roi_spatial = std::move(masks.first);
    ds.roi_semantic = std::move(masks.second);
    for (const char* split : {"train", "test"}) {
        auto& out = std::string(split) == "train" ? ds.train : ds.test;
        for (const auto& item : manifest.at(split)) {
            VoxelRecord rec;
            rec.id = item.at("id");
            rec.stimulus_id = item.at("stimulus_id");
            rec.attrs = attrs_from_json(item.at("attrs"));
            const std::string stem = item.at("stem");
            rec.v_spatial = load_vxd(dir / (stem + "_vs.vxd"));
            rec.v_semantic = load_vxd(dir / (stem + "_vm.vxd"));
            out.push_back(std::move(rec));
        }
    }
    return ds;
}

StimulusTargets stimulus_targets(const Codec& codec, const VoxelRecord& rec, std::size_t image_hw) {
    const Image img = gen_stimulus(rec.attrs, image_hw);
    const auto enc = encode_stimulus(codec, img, rec.attrs);
    return {enc.latent.z, enc.embeddings.e_img, enc.embeddings.e_cap};
}

}  // namespace vxr
