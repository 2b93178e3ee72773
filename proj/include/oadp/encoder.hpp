#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "oadp/container.hpp"
#include "oadp/geometry.hpp"
#include "oadp/tensor.hpp"

namespace oadp {

// Shape of a CLIP-style ViT visual encoder. Defaults are a toy scale that
// keeps every property test in the millisecond range.
struct EncoderConfig {
  std::size_t resolution = 32;  // input side R in pixels
  std::size_t patch = 8;
  std::size_t width = 64;       // token width d_x
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t embed_dim = 32;   // output embedding d
  // Blocks reduce to residual attention only (no norms, no MLP).
  bool attention_only = false;

  std::size_t grid() const { return resolution / patch; }
  // N_x: patch tokens plus [CLS].
  std::size_t token_count() const { return grid() * grid() + 1; }
  std::size_t patch_dim() const { return patch * patch * 3; }
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct BlockWeights {
  Vec ln1_gain, ln1_bias;
  Tensor w_q, w_k, w_v, w_o;  // d_x x d_x, applied as x * W
  Vec b_q, b_k, b_v, b_o;
  Vec ln2_gain, ln2_bias;
  Tensor w_fc1;  // d_x x 4d_x
  Vec b_fc1;
  Tensor w_fc2;  // 4d_x x d_x
  Vec b_fc2;

  friend bool operator==(const BlockWeights&, const BlockWeights&) = default;
};

struct EncoderWeights {
  EncoderConfig config;
  Tensor patch_proj;  // (patch^2 * 3) x d_x
  Vec patch_bias;
  Tensor positions;   // N_x x d_x; last row belongs to [CLS]
  Vec cls_seed;
  Vec ln_pre_gain, ln_pre_bias;
  std::vector<BlockWeights> blocks;
  Vec ln_post_gain, ln_post_bias;
  Tensor out_proj;    // d_x x d

  void validate() const;

  friend bool operator==(const EncoderWeights&, const EncoderWeights&) = default;
};

// Patch tokens in row-major order followed by the [CLS] row, positional
// embeddings added: an N_x x d_x matrix.
Tensor tokenize(const Tensor& crop, const EncoderWeights& w);

// Runs the transformer blocks on a token matrix. `allow` is the attention
// mask for every layer (all-true when null).
Tensor run_blocks(Tensor tokens, const EncoderWeights& w,
                  const BinaryMask* allow = nullptr);

// Final norm and output projection of one row of the last-layer tokens.
Vec project_token(const Tensor& tokens, std::size_t row,
                  const EncoderWeights& w);

// V: [CLS] embedding of an R x R crop.
Vec encode_cls(const Tensor& crop, const EncoderWeights& w);
Tensor encode_cls_tokens(const Tensor& crop, const EncoderWeights& w);

// V': appends an [OBJ] token initialised from the [CLS] row, restricts its
// attention to the patches selected by `object_mask` (1 x N_x) and returns
// the projected [OBJ] output.
Vec encode_obj(const Tensor& crop, const EncoderWeights& w,
               const BinaryMask& object_mask);
// The (N_x + 1) x d_x last-layer token matrix of V'.
Tensor encode_obj_tokens(const Tensor& crop, const EncoderWeights& w,
                         const BinaryMask& object_mask);

// Full OAKE extraction for one proposal of an H x W x 3 image: square the
// proposal with ratio r, resample the square to R x R, mask [OBJ] to the
// patches the original proposal covers and encode with V'.
Vec extract_object_embedding(const Tensor& image, const Box& proposal,
                             double scale_ratio, const EncoderWeights& w);

// V on the whole image resized to R x R.
Vec encode_global(const Tensor& image, const EncoderWeights& w);

// V on each R x R block; the image sides must be multiples of R.
std::vector<Vec> encode_blocks(const Tensor& image, const EncoderWeights& w);

TensorContainer weights_to_container(const EncoderWeights& w,
                                     DType dtype = DType::kF64);
EncoderWeights weights_from_container(const TensorContainer& c);

void save_weights(const EncoderWeights& w, const std::filesystem::path& path,
                  DType dtype = DType::kF64);
EncoderWeights load_weights(const std::filesystem::path& path);

}  // namespace oadp
