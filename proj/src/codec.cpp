#include "vxr/codec.hpp"

#include <algorithm>
#include <cmath>

namespace vxr {

Image::Image(Tensor px) : pixels(std::move(px)) {
    if (pixels.rank() != 3 || pixels.dim(0) != 3)
        throw ShapeError("image must be [3,H,W], got " + shape_str(pixels.shape()));
    for (double& v : pixels.data()) v = std::clamp(v, 0.0, 1.0);
}

static Tensor l2_normalized(const Tensor& v) {
    const double n = l2_norm(v);
    if (n == 0.0) throw ValueError("cannot normalize zero embedding");
    return scale(v, 1.0 / n);
}

Codec::Codec(std::uint64_t seed, std::size_t image_hw, std::size_t embed_dim)
    : image_hw_(image_hw), embed_dim_(embed_dim) {
    if (image_hw % kDownsample != 0)
        throw ShapeError("image size must be divisible by " + std::to_string(kDownsample));
    Rng rng(seed);
    const std::size_t in = 3 * image_hw * image_hw;
    img_proj_ = scale(randn(rng, {embed_dim, in}), 1.0 / std::sqrt((double)in));
    auto make_table = [&](std::size_t n) { return randn(rng, {n, embed_dim}); };
    table_shape_ = make_table(AttributeVector::kShapes);
    table_color_ = make_table(AttributeVector::kColors);
    table_row_ = make_table(AttributeVector::kGrid);
    table_col_ = make_table(AttributeVector::kGrid);
    table_scale_ = make_table(AttributeVector::kScales);
    table_bg_ = make_table(AttributeVector::kBackgrounds);
}

LatentPrior Codec::autokl_encode(const Image& img) const {
    const std::size_t H = img.height(), W = img.width();
    if (H % kDownsample != 0 || W % kDownsample != 0)
        throw ShapeError("autokl_encode: dims " + shape_str(img.pixels.shape()) + " not divisible by 4");
    const std::size_t h = H / kDownsample, w = W / kDownsample;
    Tensor z({3, h, w});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                double acc = 0.0;
                for (std::size_t di = 0; di < kDownsample; ++di)
                    for (std::size_t dj = 0; dj < kDownsample; ++dj)
                        acc += img.pixels.at3(c, i * kDownsample + di, j * kDownsample + dj);
                z.at3(c, i, j) = acc / (double)(kDownsample * kDownsample);
            }
    return {std::move(z)};
}

Image Codec::autokl_decode(const LatentPrior& latent) const {
    const Tensor& z = latent.z;
    if (z.rank() != 3) throw ShapeError("autokl_decode: latent must be [C,h,w]");
    const std::size_t C = z.dim(0), h = z.dim(1), w = z.dim(2);
    Tensor px({C, h * kDownsample, w * kDownsample});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < h * kDownsample; ++i)
            for (std::size_t j = 0; j < w * kDownsample; ++j)
                px.at3(c, i, j) = std::clamp(z.at3(c, i / kDownsample, j / kDownsample), 0.0, 1.0);
    return Image(std::move(px));
}

Tensor Codec::clip_image_embed(const Image& img) const {
    const Tensor flat = img.pixels.reshaped({img.pixels.size()});
    if (flat.size() != img_proj_.dim(1))
        throw ShapeError("clip_image_embed: image size " + std::to_string(flat.size()) +
                         " does not match codec config " + std::to_string(img_proj_.dim(1)));
    Tensor e = matmul(img_proj_, flat.reshaped({flat.size(), 1})).reshaped({embed_dim_});
    return l2_normalized(e);
}

Tensor Codec::clip_text_embed(const AttributeVector& attrs) const {
    attrs.validate();
    Tensor e({embed_dim_});
    auto accumulate = [&](const Tensor& table, std::size_t id) {
        for (std::size_t j = 0; j < embed_dim_; ++j) e[j] += table.at2(id, j);
    };
    accumulate(table_shape_, attrs.shape_id);
    accumulate(table_color_, attrs.color_id);
    accumulate(table_row_, attrs.pos_row);
    accumulate(table_col_, attrs.pos_col);
    accumulate(table_scale_, attrs.scale_id);
    accumulate(table_bg_, attrs.background_id);
    return l2_normalized(e);
}

CodecOutputs encode_stimulus(const Codec& codec, const Image& img, const AttributeVector& attrs) {
    return {codec.autokl_encode(img), {codec.clip_image_embed(img), codec.clip_text_embed(attrs)}};
}

}  // namespace vxr
