#include "oadp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace oadp {

namespace {

// Overlaps thinner than this (in crop pixels) are floating-point residue from
// mapping p into the crop frame, not real coverage.
constexpr double kOverlapTolerance = 1e-9;

struct Span1d {
  double lo, hi;
};

// Places a segment of length `side` centred on `center` inside [0, limit].
Span1d fit_segment(double center, double side, double limit) {
  double lo = center - 0.5 * side;
  double hi = lo + side;
  if (lo < 0.0) {
    lo = 0.0;
    hi = side;
  }
  if (hi > limit) {
    hi = limit;
    lo = limit - side;
  }
  return {lo, hi};
}

}  // namespace

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double h = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

Box transform_proposal(const Box& proposal, double scale_ratio,
                       const ImageSize& image) {
  check(scale_ratio > 0.0 && std::isfinite(scale_ratio),
        ErrorKind::kInvalidArgument, "scale ratio must be positive");
  const double width = static_cast<double>(image.width);
  const double height = static_cast<double>(image.height);
  double side =
      std::sqrt(scale_ratio * proposal.height() * proposal.width());
  side = std::min(side, std::min(width, height));
  const Span1d xs = fit_segment(proposal.center_x(), side, width);
  const Span1d ys = fit_segment(proposal.center_y(), side, height);
  return Box(xs.lo, ys.lo, xs.hi, ys.hi);
}

std::vector<Box> partition_blocks(const ImageSize& image, std::size_t block) {
  check(block >= 1, ErrorKind::kInvalidArgument, "block side must be positive");
  if (image.width % block != 0 || image.height % block != 0) {
    fail(ErrorKind::kPartition,
         "image " + std::to_string(image.width) + "x" +
             std::to_string(image.height) + " is not a multiple of block side " +
             std::to_string(block) + "; resize to " +
             std::to_string(std::max<std::size_t>(1, (image.width + block / 2) / block) * block) +
             "x" +
             std::to_string(std::max<std::size_t>(1, (image.height + block / 2) / block) * block) +
             " first");
  }
  std::vector<Box> blocks;
  const double side = static_cast<double>(block);
  for (std::size_t by = 0; by < image.height / block; ++by) {
    for (std::size_t bx = 0; bx < image.width / block; ++bx) {
      const double x = static_cast<double>(bx) * side;
      const double y = static_cast<double>(by) * side;
      blocks.emplace_back(x, y, x + side, y + side);
    }
  }
  return blocks;
}

BinaryMask patch_overlap_mask(const Box& proposal, const Box& transformed,
                              std::size_t resolution, std::size_t patch,
                              std::size_t token_count) {
  check(patch >= 1 && resolution % patch == 0, ErrorKind::kInvalidArgument,
        "resolution must be a multiple of the patch side");
  const std::size_t grid = resolution / patch;
  check(token_count == grid * grid + 1, ErrorKind::kDimension,
        "token count " + std::to_string(token_count) + " does not match a " +
            std::to_string(grid) + "x" + std::to_string(grid) +
            " patch grid plus [CLS]");

  const double scale = static_cast<double>(resolution) / transformed.width();
  const double mx1 = (proposal.x1() - transformed.x1()) * scale;
  const double mx2 = (proposal.x2() - transformed.x1()) * scale;
  const double my1 = (proposal.y1() - transformed.y1()) * scale;
  const double my2 = (proposal.y2() - transformed.y1()) * scale;

  BinaryMask mask(1, token_count);
  const double p = static_cast<double>(patch);
  for (std::size_t row = 0; row < grid; ++row) {
    const double cy1 = static_cast<double>(row) * p;
    const double oy = std::min(my2, cy1 + p) - std::max(my1, cy1);
    if (oy <= kOverlapTolerance) continue;
    for (std::size_t col = 0; col < grid; ++col) {
      const double cx1 = static_cast<double>(col) * p;
      const double ox = std::min(mx2, cx1 + p) - std::max(mx1, cx1);
      if (ox > kOverlapTolerance) mask.set(0, row * grid + col, true);
    }
  }
  check(mask.count() > 0, ErrorKind::kEmptyObjectMask,
        "empty object mask: the proposal covers no patch of its crop");
  return mask;
}

BinaryMask build_attention_mask(const BinaryMask& object_mask) {
  check(object_mask.rows() == 1 && object_mask.cols() >= 1,
        ErrorKind::kDimension, "object mask must be a single row");
  const std::size_t n = object_mask.cols();
  check(!object_mask(0, n - 1), ErrorKind::kInvalidArgument,
        "object mask must exclude the [CLS] position");
  BinaryMask m(n + 1, n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m.set(i, j, true);
  }
  for (std::size_t j = 0; j < n; ++j) m.set(n, j, object_mask(0, j));
  m.set(n, n, true);
  return m;
}

}  // namespace oadp
