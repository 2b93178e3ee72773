#include "oadp/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace oadp {

namespace {

// Rank order shared by NMS and the final top-k: score descending, then index.
std::vector<std::size_t> ranked(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  return order;
}

}  // namespace

void PLConfig::validate() const {
  check(gamma >= 0.0 && gamma <= 1.0, ErrorKind::kConfig, "gamma must lie in [0, 1]");
  check(nms_iou > 0.0 && nms_iou < 1.0, ErrorKind::kConfig,
        "nms_iou must lie in (0, 1)");
  check(score_threshold >= 0.0, ErrorKind::kConfig,
        "score_threshold must be non-negative");
  check(max_per_image >= 1, ErrorKind::kConfig, "max_per_image must be at least 1");
  check(temperature > 0.0, ErrorKind::kConfig, "temperature must be positive");
}

Vec pl_probs(std::span<const double> e, const CategoryTable& table,
             double temperature) {
  return probs_no_bg(e, table, temperature);
}

double confidence(double prob, double objectness, double gamma) {
  check(prob >= 0.0 && prob <= 1.0 && objectness >= 0.0 && objectness <= 1.0,
        ErrorKind::kInvalidArgument, "confidence inputs must lie in [0, 1]");
  check(gamma >= 0.0 && gamma <= 1.0, ErrorKind::kInvalidArgument,
        "gamma must lie in [0, 1]");
  return std::pow(prob, gamma) * std::pow(objectness, 1.0 - gamma);
}

std::vector<std::size_t> classwise_nms(std::span<const Detection> candidates,
                                       double iou_threshold) {
  std::vector<std::size_t> kept;
  for (std::size_t i : ranked(candidates)) {
    const Detection& d = candidates[i];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return candidates[k].category == d.category &&
             iou(candidates[k].box, d.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += threads) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<PseudoLabel> select_pls(std::span<const Proposal> proposals,
                                    std::span<const std::optional<Vec>> embeddings,
                                    const CategoryTable& table,
                                    const PLConfig& cfg) {
  cfg.validate();
  check(proposals.size() == embeddings.size(), ErrorKind::kDimension,
        "select_pls: one embedding slot per proposal required");
  const auto novel = table.novel_indices();
  std::vector<Detection> candidates;
  if (novel.empty()) return {};
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (!embeddings[i]) continue;
    const Vec probs = pl_probs(*embeddings[i], table, cfg.temperature);
    const double o = proposals[i].objectness;
    if (cfg.all_novel_candidates) {
      for (std::size_t c : novel) {
        candidates.push_back({proposals[i].box, c, confidence(probs[c], o, cfg.gamma)});
      }
      continue;
    }
    std::size_t best = novel.front();
    for (std::size_t c : novel) {
      if (probs[c] > probs[best]) best = c;
    }
    candidates.push_back({proposals[i].box, best, confidence(probs[best], o, cfg.gamma)});
  }

  std::vector<Detection> kept;
  for (std::size_t i : classwise_nms(candidates, cfg.nms_iou)) {
    if (candidates[i].score >= cfg.score_threshold) kept.push_back(candidates[i]);
  }
  if (kept.size() > cfg.max_per_image) kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(cfg.max_per_image), kept.end());
  return kept;
}

PLResult generate_pls(const Tensor& image, std::span<const Proposal> proposals,
                      const EncoderWeights& weights, const CategoryTable& table,
                      double scale_ratio, const PLConfig& cfg) {
  cfg.validate();
  std::vector<std::optional<Vec>> embeddings(proposals.size());
  parallel_for(proposals.size(), cfg.threads, [&](std::size_t i) {
    try {
      embeddings[i] = extract_object_embedding(image, proposals[i].box, scale_ratio, weights);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kEmptyObjectMask) throw;
    }
  });
  PLResult result;
  result.skipped = static_cast<std::size_t>(
      std::count(embeddings.begin(), embeddings.end(), std::nullopt));
  result.labels = select_pls(proposals, embeddings, table, cfg);
  return result;
}

}  // namespace oadp
