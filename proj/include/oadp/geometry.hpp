#pragma once

#include <cstddef>
#include <vector>

#include "oadp/box.hpp"
#include "oadp/tensor.hpp"

namespace oadp {

struct ImageSize {
  std::size_t width = 0;
  std::size_t height = 0;

  ImageSize() = default;
  ImageSize(std::size_t w, std::size_t h) : width(w), height(h) {
    check(w >= 1 && h >= 1, ErrorKind::kInvalidArgument,
          "image size must be at least 1x1");
  }
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

struct Proposal {
  Box box;
  double objectness;

  Proposal(Box b, double o) : box(b), objectness(o) {
    check(o >= 0.0 && o <= 1.0, ErrorKind::kInvalidArgument,
          "objectness must lie in [0, 1]");
  }
};

double iou(const Box& a, const Box& b);

// Area of the positive-area intersection, 0 when the boxes only touch.
double intersection_area(const Box& a, const Box& b);

// Squares a proposal to side sqrt(r * h * w) around its centre. The side is
// clamped to min(W, H) when no square of that size fits, then the square is
// shifted per axis (never shrunk) until it lies inside the image.
Box transform_proposal(const Box& proposal, double scale_ratio,
                       const ImageSize& image);

// Row-major R x R tiling of the image.
std::vector<Box> partition_blocks(const ImageSize& image, std::size_t block);

// Which patch cells of the transformed crop the original proposal touches.
// Returns a 1 x token_count mask whose final ([CLS]) entry is always 0.
BinaryMask patch_overlap_mask(const Box& proposal, const Box& transformed,
                              std::size_t resolution, std::size_t patch,
                              std::size_t token_count);

// Extends an N_x-token attention pattern with the [OBJ] row and column:
//   [ 1 (N_x x N_x)  0 ]
//   [ m              1 ]
BinaryMask build_attention_mask(const BinaryMask& object_mask);

}  // namespace oadp
