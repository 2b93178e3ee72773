#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oadp/box.hpp"

namespace oadp {

using Shape = std::vector<std::size_t>;
using Vec = std::vector<double>;

std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Rank is whatever the shape says; the
// indexing helpers cover the ranks the library uses (1 to 3).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Row views of a rank-2 tensor.
  std::span<double> row(std::size_t i);
  std::span<const double> row(std::size_t i) const;

  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Row-major boolean matrix used for attention and patch masks.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t rows, std::size_t cols, bool fill = false)
      : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool operator()(std::size_t i, std::size_t j) const {
    return bits_[i * cols_ + j] != 0;
  }
  void set(std::size_t i, std::size_t j, bool v) {
    bits_[i * cols_ + j] = v ? 1 : 0;
  }
  std::size_t count() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

// How L1 distances are reduced over (pairs x coordinates).
enum class Reduction { kMean, kSum };

Tensor matmul(const Tensor& a, const Tensor& b);

// x[n x k] * w[k x m] + bias[m] (bias may be empty).
Tensor linear(const Tensor& x, const Tensor& w, std::span<const double> bias);

// Row-wise softmax; disallowed entries get probability exactly 0.
Tensor masked_softmax(const Tensor& scores, const BinaryMask& allow);

Tensor layer_norm(const Tensor& x, std::span<const double> gain,
                  std::span<const double> bias, double eps = 1e-5);

// Channel means of an h x w x c map.
Vec gap(const Tensor& feature);

// Reads f[y, x, :] by bilinear interpolation at continuous coordinates where
// cell (i, j) has its center at (j + 0.5, i + 0.5). Neighbours outside the
// map contribute 0.
void bilinear_sample_zero(const Tensor& feature, double x, double y,
                          std::span<double> out);

// RoI Align: s x s bins over `box` (feature coordinates), each bin the mean of
// samples_per_bin^2 bilinear samples at the centres of an even subdivision.
Tensor roi_align(const Tensor& feature, const Box& box, std::size_t out,
                 std::size_t samples_per_bin = 2);

// Image resize, align_corners = false, edge clamped.
Tensor bilinear_resize(const Tensor& image, std::size_t out_h,
                       std::size_t out_w);

// Resamples the region `box` of an image onto an out_h x out_w grid with the
// same half-pixel, edge-clamped convention as bilinear_resize. For boxes on
// integer coordinates inside the image this equals crop followed by resize.
Tensor crop_and_resize(const Tensor& image, const Box& box, std::size_t out_h,
                       std::size_t out_w);

// L1 distance between aligned embedding sets (rank-2, one embedding per row).
double l1_distance(const Tensor& a, const Tensor& b,
                   Reduction reduction = Reduction::kMean);
inline double l1_mean(const Tensor& a, const Tensor& b) {
  return l1_distance(a, b, Reduction::kMean);
}

// Stacks equal-length vectors into an n x d tensor. An empty set maps to the
// default (shapeless) tensor.
Tensor stack_rows(const std::vector<Vec>& rows);

}  // namespace oadp
