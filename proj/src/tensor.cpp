#include "oadp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace oadp {

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  check(t.rank() == rank, ErrorKind::kDimension,
        std::string(what) + ": expected rank " + std::to_string(rank) +
            ", got shape " + shape_string(t.shape()));
}

}  // namespace

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension_error";
    case ErrorKind::kEmptyAttentionRow: return "empty_attention_row";
    case ErrorKind::kDegenerateBox: return "degenerate_box";
    case ErrorKind::kPartition: return "partition_error";
    case ErrorKind::kEmptyObjectMask: return "empty_object_mask";
    case ErrorKind::kZeroVector: return "zero_vector";
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kFormat: return "format_error";
    case ErrorKind::kIo: return "io_error";
    case ErrorKind::kConfig: return "config_error";
  }
  return "error";
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {
  for (auto d : shape_) {
    check(d > 0, ErrorKind::kDimension, "tensor dimensions must be positive");
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    check(d > 0, ErrorKind::kDimension, "tensor dimensions must be positive");
  }
  check(product(shape_) == data_.size(), ErrorKind::kDimension,
        "tensor data length " + std::to_string(data_.size()) +
            " does not match shape " + shape_string(shape_));
}

std::span<double> Tensor::row(std::size_t i) {
  return std::span<double>(data_).subspan(i * shape_[1], shape_[1]);
}

std::span<const double> Tensor::row(std::size_t i) const {
  return std::span<const double>(data_).subspan(i * shape_[1], shape_[1]);
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  check(b.dim(0) == k, ErrorKind::kDimension,
        "matmul: inner dimensions disagree " + shape_string(a.shape()) +
            " x " + shape_string(b.shape()));
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, std::span<const double> bias) {
  Tensor out = matmul(x, w);
  if (bias.empty()) return out;
  check(bias.size() == out.dim(1), ErrorKind::kDimension,
        "linear: bias length does not match output width");
  for (std::size_t i = 0; i < out.dim(0); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
  return out;
}

Tensor masked_softmax(const Tensor& scores, const BinaryMask& allow) {
  require_rank(scores, 2, "masked_softmax");
  const std::size_t n = scores.dim(0), m = scores.dim(1);
  check(allow.rows() == n && allow.cols() == m, ErrorKind::kDimension,
        "masked_softmax: mask shape does not match scores");
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      if (allow(i, j)) peak = std::max(peak, scores(i, j));
    }
    check(std::isfinite(peak), ErrorKind::kEmptyAttentionRow,
          "empty attention row " + std::to_string(i));
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (!allow(i, j)) continue;
      out(i, j) = std::exp(scores(i, j) - peak);
      total += out(i, j);
    }
    for (std::size_t j = 0; j < m; ++j) out(i, j) /= total;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, std::span<const double> gain,
                  std::span<const double> bias, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t d = x.dim(1);
  check(gain.size() == d && bias.size() == d, ErrorKind::kDimension,
        "layer_norm: gain/bias length does not match row width");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    auto o = out.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      o[j] = (r[j] - mean) * inv * gain[j] + bias[j];
    }
  }
  return out;
}

Vec gap(const Tensor& feature) {
  require_rank(feature, 3, "gap");
  const std::size_t h = feature.dim(0), w = feature.dim(1), c = feature.dim(2);
  Vec out(c, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t k = 0; k < c; ++k) out[k] += feature(i, j, k);
    }
  }
  for (double& v : out) v /= static_cast<double>(h * w);
  return out;
}

void bilinear_sample_zero(const Tensor& feature, double x, double y,
                          std::span<double> out) {
  const auto h = static_cast<long>(feature.dim(0));
  const auto w = static_cast<long>(feature.dim(1));
  const std::size_t c = feature.dim(2);
  std::fill(out.begin(), out.end(), 0.0);
  const double u = x - 0.5, v = y - 0.5;
  const double fu = std::floor(u), fv = std::floor(v);
  const long j0 = static_cast<long>(fu), i0 = static_cast<long>(fv);
  const double tx = u - fu, ty = v - fv;
  const long is[2] = {i0, i0 + 1};
  const long js[2] = {j0, j0 + 1};
  const double wy[2] = {1.0 - ty, ty};
  const double wx[2] = {1.0 - tx, tx};
  for (int a = 0; a < 2; ++a) {
    if (is[a] < 0 || is[a] >= h) continue;
    for (int b = 0; b < 2; ++b) {
      if (js[b] < 0 || js[b] >= w) continue;
      const double weight = wy[a] * wx[b];
      if (weight == 0.0) continue;
      for (std::size_t k = 0; k < c; ++k) {
        out[k] += weight * feature(static_cast<std::size_t>(is[a]),
                                   static_cast<std::size_t>(js[b]), k);
      }
    }
  }
}

Tensor roi_align(const Tensor& feature, const Box& box, std::size_t out,
                 std::size_t samples_per_bin) {
  require_rank(feature, 3, "roi_align");
  check(out >= 1 && samples_per_bin >= 1, ErrorKind::kInvalidArgument,
        "roi_align: output size and samples per bin must be positive");
  const std::size_t c = feature.dim(2);
  const double bin_w = box.width() / static_cast<double>(out);
  const double bin_h = box.height() / static_cast<double>(out);
  const double n = static_cast<double>(samples_per_bin);
  Tensor result({out, out, c});
  Vec sample(c);
  for (std::size_t by = 0; by < out; ++by) {
    for (std::size_t bx = 0; bx < out; ++bx) {
      for (std::size_t sy = 0; sy < samples_per_bin; ++sy) {
        const double y = box.y1() + bin_h * (static_cast<double>(by) +
                                             (static_cast<double>(sy) + 0.5) / n);
        for (std::size_t sx = 0; sx < samples_per_bin; ++sx) {
          const double x =
              box.x1() +
              bin_w * (static_cast<double>(bx) + (static_cast<double>(sx) + 0.5) / n);
          bilinear_sample_zero(feature, x, y, sample);
          for (std::size_t k = 0; k < c; ++k) result(by, bx, k) += sample[k];
        }
      }
      for (std::size_t k = 0; k < c; ++k) result(by, bx, k) /= n * n;
    }
  }
  return result;
}

namespace {

// Edge-clamped bilinear read at source coordinates in pixel-index space
// (pixel i has coordinate i).
void sample_clamped(const Tensor& image, double sy, double sx,
                    std::span<double> out) {
  const double max_y = static_cast<double>(image.dim(0) - 1);
  const double max_x = static_cast<double>(image.dim(1) - 1);
  sy = std::clamp(sy, 0.0, max_y);
  sx = std::clamp(sx, 0.0, max_x);
  const auto y0 = static_cast<std::size_t>(std::floor(sy));
  const auto x0 = static_cast<std::size_t>(std::floor(sx));
  const std::size_t y1 = std::min(y0 + 1, image.dim(0) - 1);
  const std::size_t x1 = std::min(x0 + 1, image.dim(1) - 1);
  const double ty = sy - static_cast<double>(y0);
  const double tx = sx - static_cast<double>(x0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double top = image(y0, x0, k) * (1.0 - tx) + image(y0, x1, k) * tx;
    const double bottom = image(y1, x0, k) * (1.0 - tx) + image(y1, x1, k) * tx;
    out[k] = top * (1.0 - ty) + bottom * ty;
  }
}

}  // namespace

Tensor crop_and_resize(const Tensor& image, const Box& box, std::size_t out_h,
                       std::size_t out_w) {
  require_rank(image, 3, "crop_and_resize");
  check(out_h >= 1 && out_w >= 1, ErrorKind::kInvalidArgument,
        "crop_and_resize: output size must be positive");
  const std::size_t c = image.dim(2);
  const double scale_y = box.height() / static_cast<double>(out_h);
  const double scale_x = box.width() / static_cast<double>(out_w);
  Tensor out({out_h, out_w, c});
  for (std::size_t i = 0; i < out_h; ++i) {
    const double sy = box.y1() + (static_cast<double>(i) + 0.5) * scale_y - 0.5;
    for (std::size_t j = 0; j < out_w; ++j) {
      const double sx = box.x1() + (static_cast<double>(j) + 0.5) * scale_x - 0.5;
      sample_clamped(image, sy, sx,
                     out.data().subspan((i * out_w + j) * c, c));
    }
  }
  return out;
}

Tensor bilinear_resize(const Tensor& image, std::size_t out_h,
                       std::size_t out_w) {
  require_rank(image, 3, "bilinear_resize");
  const Box full(0.0, 0.0, static_cast<double>(image.dim(1)),
                 static_cast<double>(image.dim(0)));
  return crop_and_resize(image, full, out_h, out_w);
}

double l1_distance(const Tensor& a, const Tensor& b, Reduction reduction) {
  check(a.shape() == b.shape(), ErrorKind::kDimension,
        "l1: embedding sets differ in shape " + shape_string(a.shape()) +
            " vs " + shape_string(b.shape()));
  if (a.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return reduction == Reduction::kMean ? total / static_cast<double>(a.size())
                                       : total;
}

Tensor stack_rows(const std::vector<Vec>& rows) {
  if (rows.empty()) return Tensor();
  const std::size_t d = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * d);
  for (const auto& r : rows) {
    check(r.size() == d, ErrorKind::kDimension, "stack_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), d}, std::move(data));
}

}  // namespace oadp
