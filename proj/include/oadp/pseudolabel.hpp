#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "oadp/classify.hpp"
#include "oadp/encoder.hpp"
#include "oadp/geometry.hpp"

namespace oadp {

struct PLConfig {
  double gamma = 0.3;
  double nms_iou = 0.5;
  double score_threshold = 0.0;
  std::size_t max_per_image = 100;
  // Emit every novel category per proposal instead of only the argmax.
  bool all_novel_candidates = false;
  double temperature = 1.0;
  // Worker threads for per-proposal encoding; output does not depend on it.
  std::size_t threads = 1;

  void validate() const;
};

struct Detection {
  Box box;
  std::size_t category;  // index into the category table
  double score;
};

using PseudoLabel = Detection;

struct PLResult {
  std::vector<PseudoLabel> labels;
  std::size_t skipped = 0;  // proposals whose object mask came out empty
};

// Softmax over every category (base and novel), no background.
Vec pl_probs(std::span<const double> e, const CategoryTable& table,
             double temperature = 1.0);

// P^gamma * o^(1 - gamma), with 0^0 = 1.
double confidence(double prob, double objectness, double gamma);

// Greedy per-category NMS: within a category, a detection is dropped when its
// IoU with an already kept, higher-ranked one exceeds `iou_threshold`. Rank is
// score descending, then input index. Returns kept indices in rank order.
std::vector<std::size_t> classwise_nms(std::span<const Detection> candidates,
                                       double iou_threshold);

// Pseudo labels for one image: OAKE embedding per proposal, probabilities over
// all categories, novel candidates scored by confidence, class-wise NMS, score
// threshold, then the top max_per_image.
PLResult generate_pls(const Tensor& image, std::span<const Proposal> proposals,
                      const EncoderWeights& weights, const CategoryTable& table,
                      double scale_ratio, const PLConfig& cfg);

// The scoring stage of generate_pls on precomputed OAKE embeddings
// (one per proposal, nullopt for skipped proposals).
std::vector<PseudoLabel> select_pls(std::span<const Proposal> proposals,
                                    std::span<const std::optional<Vec>> embeddings,
                                    const CategoryTable& table,
                                    const PLConfig& cfg);

// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace oadp
