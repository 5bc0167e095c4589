#include "vxr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace vxr {

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b, bool* degenerate) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= (double)n;
    mb /= (double)n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa == 0.0 || sbb == 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    if (degenerate) *degenerate = false;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

double pixcorr(const Image& a, const Image& b, bool* degenerate) {
    if (!a.pixels.same_shape(b.pixels))
        throw ShapeError("pixcorr: image shapes differ, " + shape_str(a.pixels.shape()) + " vs " +
                         shape_str(b.pixels.shape()));
    return pearson(a.pixels.data(), b.pixels.data(), degenerate);
}

namespace {

// Rec. 601 luma.
std::vector<double> grayscale(const Image& img) {
    const std::size_t H = img.height(), W = img.width();
    std::vector<double> g(H * W);
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
            g[i * W + j] = 0.299 * img.pixels.at3(0, i, j) + 0.587 * img.pixels.at3(1, i, j) +
                           0.114 * img.pixels.at3(2, i, j);
    return g;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    if (!a.pixels.same_shape(b.pixels))
        throw ShapeError("ssim: image shapes differ, " + shape_str(a.pixels.shape()) + " vs " +
                         shape_str(b.pixels.shape()));
    constexpr std::size_t kWin = 7;
    const std::size_t H = a.height(), W = a.width();
    if (H < kWin || W < kWin)
        throw ShapeError("ssim: image smaller than the " + std::to_string(kWin) + "x" +
                         std::to_string(kWin) + " window");
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // L = 1
    const auto ga = grayscale(a), gb = grayscale(b);
    const double inv_n = 1.0 / (double)(kWin * kWin);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i + kWin <= H; ++i)
        for (std::size_t j = 0; j + kWin <= W; ++j) {
            double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
            for (std::size_t di = 0; di < kWin; ++di)
                for (std::size_t dj = 0; dj < kWin; ++dj) {
                    const double va = ga[(i + di) * W + j + dj];
                    const double vb = gb[(i + di) * W + j + dj];
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            const double mua = sa * inv_n, mub = sb * inv_n;
            const double vara = saa * inv_n - mua * mua;
            const double varb = sbb * inv_n - mub * mub;
            const double cov = sab * inv_n - mua * mub;
            const double num = (2.0 * mua * mub + c1) * (2.0 * cov + c2);
            const double den = (mua * mua + mub * mub + c1) * (vara + varb + c2);
            total += num / den;
            ++count;
        }
    return total / (double)count;
}

namespace {

double feature_corr(const Tensor& fa, const Tensor& fb) {
    bool degenerate = false;
    const double r = pearson(fa.data(), fb.data(), &degenerate);
    return degenerate ? 0.0 : r;
}

}  // namespace

double two_way_identification(const std::vector<Image>& recons, const std::vector<Image>& targets,
                              const FeatureFn& features) {
    if (recons.size() != targets.size()) throw ShapeError("two_way: list length mismatch");
    const std::size_t n = recons.size();
    if (n < 2) throw ShapeError("two_way: need at least 2 items");
    std::vector<Tensor> fr(n), ft(n);
    for (std::size_t i = 0; i < n; ++i) {
        fr[i] = features(recons[i]);
        ft[i] = features(targets[i]);
    }
    double score = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double self = feature_corr(fr[i], ft[i]);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double other = feature_corr(fr[i], ft[j]);
            if (self > other)
                score += 1.0;
            else if (self == other)
                score += 0.5;
        }
    }
    return 100.0 * score / (double)(n * (n - 1));
}

double embedding_retrieval(const std::vector<Tensor>& pred, const std::vector<Tensor>& truth,
                           std::size_t k) {
    if (pred.size() != truth.size()) throw ShapeError("embedding_retrieval: list length mismatch");
    const std::size_t n = pred.size();
    if (k < 1 || k > n) throw ShapeError("embedding_retrieval: k out of range");
    auto cosine = [](const Tensor& a, const Tensor& b) {
        const double na = l2_norm(a), nb = l2_norm(b);
        if (na == 0.0 || nb == 0.0) return 0.0;
        return dot(a, b) / (na * nb);
    };
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double self = cosine(pred[i], truth[i]);
        // Ties rank by index, so a degenerate all-equal similarity profile
        // (e.g. zeroed predictions) scores exactly at chance.
        std::size_t ranked_above = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double c = cosine(pred[i], truth[j]);
            if (c > self || (c == self && j < i)) ++ranked_above;
        }
        if (ranked_above < k) ++hits;
    }
    return (double)hits / (double)n;
}

MetricReport evaluate_images(const std::vector<Image>& recons, const std::vector<Image>& targets,
                             const FeatureFn& features, const std::vector<Tensor>& pred_embs,
                             const std::vector<Tensor>& true_embs) {
    MetricReport r;
    if (recons.size() != targets.size()) throw ShapeError("evaluate_images: list length mismatch");
    for (std::size_t i = 0; i < recons.size(); ++i) {
        MetricItem item;
        item.id = i;
        item.pixcorr = pixcorr(recons[i], targets[i]);
        item.ssim = ssim(recons[i], targets[i]);
        r.items.push_back(item);
        r.pixcorr += item.pixcorr;
        r.ssim += item.ssim;
    }
    r.pixcorr /= (double)recons.size();
    r.ssim /= (double)recons.size();
    r.two_way_pct = recons.size() >= 2 ? two_way_identification(recons, targets, features) : 100.0;
    r.embedding_top1 = pred_embs.empty() ? 0.0 : embedding_retrieval(pred_embs, true_embs, 1);
    return r;
}

void write_report_csv(const std::filesystem::path& path, const MetricReport& r) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "id,pixcorr,ssim\n";
    for (const auto& item : r.items) os << item.id << "," << item.pixcorr << "," << item.ssim << "\n";
    os << "summary," << r.pixcorr << "," << r.ssim << "\n";
    os << "two_way_pct," << r.two_way_pct << ",\n";
    os << "embedding_top1," << r.embedding_top1 << ",\n";
}

void write_report_markdown(const std::filesystem::path& path, const MetricReport& r,
                           const std::string& row_label) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "| Config | PixCorr | SSIM | TwoWay% | EmbTop1 |\n";
    os << "|---|---|---|---|---|\n";
    os << "| " << row_label << " | " << r.pixcorr << " | " << r.ssim << " | " << r.two_way_pct << " | "
       << r.embedding_top1 << " |\n";
}

}  // namespace vxr
