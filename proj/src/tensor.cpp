#include "vxr/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace vxr {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) {
        if (d == 0) throw ShapeError("zero dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
    for (double v : data_)
        if (!std::isfinite(v)) throw ValueError("non-finite value in tensor of shape " + shape_str(shape_));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    if (!std::isfinite(value)) throw ValueError("non-finite fill value");
    return t;
}

Tensor Tensor::reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != size())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
}

static void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same(a, b, "add");
    Tensor r(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same(a, b, "sub");
    Tensor r(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same(a, b, "mul");
    Tensor r(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * b[i];
    return r;
}

Tensor scale(const Tensor& a, double s) {
    Tensor r(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * s;
    return r;
}

double sum(const Tensor& a) { return std::accumulate(a.data().begin(), a.data().end(), 0.0); }

double mean(const Tensor& a) { return sum(a) / static_cast<double>(a.size()); }

double l2_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

double dot(const Tensor& a, const Tensor& b) {
    check_same(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1) throw ShapeError("concat expects rank-1 tensors");
    std::vector<double> d = a.data();
    d.insert(d.end(), b.data().begin(), b.data().end());
    return Tensor({a.size() + b.size()}, std::move(d));
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    Tensor r({a.dim(0), b.dim(1)});
    Eigen::Map<const RowMat> ma(a.data().data(), (Eigen::Index)a.dim(0), (Eigen::Index)a.dim(1));
    Eigen::Map<const RowMat> mb(b.data().data(), (Eigen::Index)b.dim(0), (Eigen::Index)b.dim(1));
    Eigen::Map<RowMat> mr(r.data().data(), (Eigen::Index)r.dim(0), (Eigen::Index)r.dim(1));
    mr.noalias() = ma * mb;
    return r;
}

static std::size_t clampi(long i, long n) { return (std::size_t)std::clamp(i, 0L, n - 1); }

Tensor conv2d_3x3(const Tensor& x, const Tensor& kernel) {
    if (x.rank() != 3) throw ShapeError("conv2d_3x3: input must be [C,H,W], got " + shape_str(x.shape()));
    if (kernel.rank() != 2 || kernel.dim(0) != 3 || kernel.dim(1) != 3)
        throw ShapeError("conv2d_3x3: kernel must be [3,3], got " + shape_str(kernel.shape()));
    const long C = (long)x.dim(0), H = (long)x.dim(1), W = (long)x.dim(2);
    Tensor y(x.shape());
    for (long c = 0; c < C; ++c)
        for (long i = 0; i < H; ++i)
            for (long j = 0; j < W; ++j) {
                double acc = 0.0;
                for (long di = -1; di <= 1; ++di)
                    for (long dj = -1; dj <= 1; ++dj)
                        acc += kernel.at2((std::size_t)(di + 1), (std::size_t)(dj + 1)) *
                               x.at3((std::size_t)c, clampi(i + di, H), clampi(j + dj, W));
                y.at3((std::size_t)c, (std::size_t)i, (std::size_t)j) = acc;
            }
    return y;
}

Tensor conv2d_3x3_backward_input(const Tensor& grad_out, const Tensor& kernel) {
    if (grad_out.rank() != 3)
        throw ShapeError("conv2d_3x3_backward_input: grad must be [C,H,W], got " + shape_str(grad_out.shape()));
    if (kernel.rank() != 2 || kernel.dim(0) != 3 || kernel.dim(1) != 3)
        throw ShapeError("conv2d_3x3_backward_input: kernel must be [3,3]");
    const long C = (long)grad_out.dim(0), H = (long)grad_out.dim(1), W = (long)grad_out.dim(2);
    Tensor gx(grad_out.shape());
    for (long c = 0; c < C; ++c)
        for (long i = 0; i < H; ++i)
            for (long j = 0; j < W; ++j) {
                const double g = grad_out.at3((std::size_t)c, (std::size_t)i, (std::size_t)j);
                for (long di = -1; di <= 1; ++di)
                    for (long dj = -1; dj <= 1; ++dj)
                        gx.at3((std::size_t)c, clampi(i + di, H), clampi(j + dj, W)) +=
                            g * kernel.at2((std::size_t)(di + 1), (std::size_t)(dj + 1));
            }
    return gx;
}

}  // namespace vxr
