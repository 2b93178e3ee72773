#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oadp/classify.hpp"
#include "oadp/encoder.hpp"
#include "oadp/synthetic.hpp"

namespace oadp {

// How a ground-truth box becomes the square region handed to the encoder.
enum class CropStrategy {
  kMbs,       // minimum bounding square, side max(w, h)
  kFixed,     // fixed side
  kAdaptive,  // side sqrt(r * w * h)
};

std::string strategy_name(CropStrategy s);
CropStrategy parse_strategy(const std::string& name);

struct CropExperimentConfig {
  double fixed_side = 64.0;
  double adaptive_ratio = 4.0;
  std::size_t threads = 1;
};

// Centred square of the strategy's side, clamped and translated into the
// image with the same rule as transform_proposal.
Box crop_square(const Box& object, CropStrategy strategy, const ImageSize& image,
                const CropExperimentConfig& cfg);

// Zero-shot label for one object: unmasked runs V on the crop, masked runs
// V' with [OBJ] restricted to the object's patches. Returns the argmax
// category of the embedding against `table`.
std::size_t classify_object(const Tensor& image, const Box& object,
                            CropStrategy strategy, bool masked,
                            const EncoderWeights& w, const CategoryTable& table,
                            const CropExperimentConfig& cfg);

struct GridCell {
  CropStrategy strategy;
  bool masked;
  double macro_precision = 0.0;
  double weighted_precision = 0.0;
  std::size_t objects = 0;
};

struct CropGrid {
  std::vector<GridCell> cells;
  const GridCell* find(CropStrategy s, bool masked) const;
};

CropGrid compare_crops(std::span<const Scene> scenes, const EncoderWeights& w,
                       const CategoryTable& table,
                       std::span<const CropStrategy> strategies,
                       std::span<const bool> maskings,
                       const CropExperimentConfig& cfg);

// Reference embeddings standing in for text embeddings of the synthetic
// categories. Each category pattern is rendered alone on a flat background
// at the scale an adaptive crop presents it; the entry is the sum of the
// unit [CLS] embedding and the unit masked [OBJ] embedding of that image.
CategoryTable prototype_table(const EncoderWeights& w, std::size_t categories,
                              const CropExperimentConfig& cfg);

}  // namespace oadp
