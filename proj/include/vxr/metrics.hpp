#pragma once

#include "vxr/codec.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace vxr {

// Pearson correlation over all flattened pixels. Zero-variance inputs are
// defined as 0 (flagged via the optional out-parameter).
double pixcorr(const Image& a, const Image& b, bool* degenerate = nullptr);

// Mean local SSIM after grayscale conversion: 7x7 uniform window,
// C1 = (0.01)^2, C2 = (0.03)^2 with dynamic range L = 1.
double ssim(const Image& a, const Image& b);

using FeatureFn = std::function<Tensor(const Image&)>;

// Ordered-pair two-way identification: for each (i, j != i), success when
// corr(f(recon_i), f(target_i)) > corr(f(recon_i), f(target_j)); ties count
// 0.5. Returns a percentage in [0, 100].
double two_way_identification(const std::vector<Image>& recons, const std::vector<Image>& targets,
                              const FeatureFn& features);

// Fraction of rows whose true embedding ranks in the top-k by cosine
// similarity to the prediction.
double embedding_retrieval(const std::vector<Tensor>& pred, const std::vector<Tensor>& truth,
                           std::size_t k);

struct MetricItem {
    std::size_t id = 0;
    double pixcorr = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    double pixcorr = 0.0;
    double ssim = 0.0;
    double two_way_pct = 0.0;      // [0, 100]
    double embedding_top1 = 0.0;   // [0, 1]
    std::vector<MetricItem> items;
};

MetricReport evaluate_images(const std::vector<Image>& recons, const std::vector<Image>& targets,
                             const FeatureFn& features, const std::vector<Tensor>& pred_embs,
                             const std::vector<Tensor>& true_embs);

void write_report_csv(const std::filesystem::path& path, const MetricReport& r);
void write_report_markdown(const std::filesystem::path& path, const MetricReport& r,
                           const std::string& row_label);

}  // namespace vxr
