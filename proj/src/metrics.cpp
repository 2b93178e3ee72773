#include "oadp/metrics.hpp"

#include <algorithm>

namespace oadp {

namespace {

struct Tally {
  std::size_t correct = 0;
  std::size_t total = 0;
};

std::map<std::size_t, Tally> tally(std::span<const ClassificationRecord> records) {
  check(!records.empty(), ErrorKind::kInvalidArgument,
        "precision of an empty record set");
  std::map<std::size_t, Tally> out;
  for (const auto& r : records) {
    auto& t = out[r.truth];
    ++t.total;
    if (r.predicted == r.truth) ++t.correct;
  }
  return out;
}

}  // namespace

double macro_precision(std::span<const ClassificationRecord> records) {
  const auto counts = tally(records);
  double sum = 0.0;
  for (const auto& [cat, t] : counts) {
    sum += static_cast<double>(t.correct) / static_cast<double>(t.total);
  }
  return sum / static_cast<double>(counts.size());
}

double weighted_precision(std::span<const ClassificationRecord> records) {
  const auto counts = tally(records);
  double sum = 0.0;
  std::size_t total = 0;
  for (const auto& [cat, t] : counts) {
    sum += static_cast<double>(t.total) *
           (static_cast<double>(t.correct) / static_cast<double>(t.total));
    total += t.total;
  }
  return sum / static_cast<double>(total);
}

std::optional<double> average_precision(std::span<const ImageDetections> images,
                                        std::size_t category,
                                        double iou_threshold) {
  struct Ranked {
    double score;
    std::size_t image;
    std::size_t index;
  };
  std::vector<Ranked> preds;
  std::size_t n_truth = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (const auto& gt : images[i].truths) n_truth += gt.category == category;
    const auto& p = images[i].predictions;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (p[j].category == category) preds.push_back({p[j].score, i, j});
    }
  }
  if (n_truth == 0) return std::nullopt;
  std::stable_sort(preds.begin(), preds.end(),
                   [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> matched(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    matched[i].assign(images[i].truths.size(), false);
  }
  std::vector<bool> is_tp;
  for (const auto& r : preds) {
    const auto& img = images[r.image];
    const Box& box = img.predictions[r.index].box;
    double best_iou = iou_threshold;
    std::optional<std::size_t> best;
    for (std::size_t g = 0; g < img.truths.size(); ++g) {
      if (img.truths[g].category != category || matched[r.image][g]) continue;
      const double v = iou(box, img.truths[g].box);
      if (v >= best_iou && (!best || v > best_iou)) {
        best_iou = v;
        best = g;
      }
    }
    if (best) matched[r.image][*best] = true;
    is_tp.push_back(best.has_value());
  }

  // All-point interpolation: precision envelope from the right.
  const std::size_t n = is_tp.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += is_tp[k];
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(n_truth);
  }
  for (std::size_t k = n; k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

PLStats pl_stats(std::span<const std::vector<PseudoLabel>> per_image) {
  PLStats s;
  s.images = per_image.size();
  for (const auto& labels : per_image) {
    s.total += labels.size();
    for (const auto& pl : labels) ++s.per_category[pl.category];
  }
  if (s.images > 0) {
    s.per_image = static_cast<double>(s.total) / static_cast<double>(s.images);
  }
  return s;
}

}  // namespace oadp
