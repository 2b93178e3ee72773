#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "oadp/pseudolabel.hpp"

namespace oadp {

struct ClassificationRecord {
  std::size_t truth;
  std::optional<std::size_t> predicted;  // nullopt counts as wrong
};

// Per true category: correct / total. Macro averages categories equally,
// weighted averages them by truth count.
double macro_precision(std::span<const ClassificationRecord> records);
double weighted_precision(std::span<const ClassificationRecord> records);

struct GroundTruth {
  Box box;
  std::size_t category;
};

struct ImageDetections {
  std::vector<GroundTruth> truths;
  std::vector<Detection> predictions;
};

// Average precision for one category at IoU >= `iou_threshold`. Predictions
// are matched greedily in descending score order (ties: image order, then
// input order) to the unmatched truth of highest IoU in the same image; the
// PR curve uses all-point interpolation. nullopt when the category has no
// ground truth.
std::optional<double> average_precision(std::span<const ImageDetections> images,
                                        std::size_t category,
                                        double iou_threshold = 0.5);

inline std::optional<double> ap50(std::span<const ImageDetections> images,
                                  std::size_t category) {
  return average_precision(images, category, 0.5);
}

struct PLStats {
  std::size_t images = 0;
  std::size_t total = 0;
  double per_image = 0.0;
  std::map<std::size_t, std::size_t> per_category;
};

PLStats pl_stats(std::span<const std::vector<PseudoLabel>> per_image);

}  // namespace oadp
