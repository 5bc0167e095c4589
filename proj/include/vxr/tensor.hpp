#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vxr {

// Thrown on any shape/dimension contract violation. Messages name both shapes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a non-finite value crosses a construction boundary.
struct ValueError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles. Immutable by convention once built:
// all operations below return fresh tensors. Mutable access exists for
// construction and for optimizer updates only.
class Tensor {
  public:
    Tensor() = default;

    // Zero-filled tensor.
    explicit Tensor(Shape shape);

    // Takes ownership of data; rejects length mismatch and non-finite values.
    Tensor(Shape shape, std::vector<double> data);

    static Tensor full(Shape shape, double value);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // 2-D access, row-major.
    double at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    double& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

    // 3-D access (C,H,W).
    double at3(std::size_t c, std::size_t h, std::size_t w) const {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }
    double& at3(std::size_t c, std::size_t h, std::size_t w) {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }

    Tensor reshaped(Shape new_shape) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_numel(const Shape& s);

// Elementwise arithmetic. Shapes must match exactly; no broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

double sum(const Tensor& a);
double mean(const Tensor& a);
double l2_norm(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);

// Concatenate rank-1 tensors.
Tensor concat(const Tensor& a, const Tensor& b);

// Standard matrix product, a: [m x k], b: [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Per-channel 3x3 cross-correlation with replicate padding at the borders.
// x: [C,H,W], kernel: [3,3].
Tensor conv2d_3x3(const Tensor& x, const Tensor& kernel);

// Adjoint of conv2d_3x3 with respect to its input: scatters grad_out back
// through the same replicate-padded stencil. Shapes as conv2d_3x3.
Tensor conv2d_3x3_backward_input(const Tensor& grad_out, const Tensor& kernel);

}  // namespace vxr
