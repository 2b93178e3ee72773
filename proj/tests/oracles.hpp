#pragma once

// Brute-force references shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "oadp/metrics.hpp"

namespace testing {

using namespace oadp;

// Bilinear read with zero outside the map, written out per neighbour.
inline double zero_bilinear(const Tensor& f, double x, double y, std::size_t ch) {
  const double gx = x - 0.5, gy = y - 0.5;
  const double x0 = std::floor(gx), y0 = std::floor(gy);
  const double ax = gx - x0, ay = gy - y0;
  const auto at = [&](double r, double c) {
    if (r < 0 || c < 0 || r >= static_cast<double>(f.dim(0)) ||
        c >= static_cast<double>(f.dim(1))) {
      return 0.0;
    }
    return f(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch);
  };
  return (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
         ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
}

inline double clamped_bilinear(const Tensor& img, double sx, double sy, std::size_t ch) {
  const double h = static_cast<double>(img.dim(0)), w = static_cast<double>(img.dim(1));
  sx = std::clamp(sx, 0.0, w - 1);
  sy = std::clamp(sy, 0.0, h - 1);
  const double x0 = std::floor(sx), y0 = std::floor(sy);
  const double x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double ax = sx - x0, ay = sy - y0;
  const auto at = [&](double r, double c) {
    return img(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch);
  };
  return (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x1)) +
         ay * ((1 - ax) * at(y1, x0) + ax * at(y1, x1));
}

// Kept set characterised as a fixed point: a detection survives iff no
// higher-ranked survivor of its category overlaps it above the threshold.
inline std::vector<std::size_t> brute_force_nms(const std::vector<Detection>& d, double thr) {
  const std::size_t n = d.size();
  const auto before = [&](std::size_t a, std::size_t b) {
    return d[a].score > d[b].score || (d[a].score == d[b].score && a < b);
  };
  std::vector<std::vector<bool>> hits(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      hits[i][j] = i != j && d[i].category == d[j].category && before(j, i) &&
                   iou(d[i].box, d[j].box) > thr;
    }
  }
  std::vector<bool> keep(n, true);
  for (std::size_t pass = 0; pass <= n; ++pass) {
    std::vector<bool> next(n, true);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (hits[i][j] && keep[j]) next[i] = false;
      }
    }
    keep = next;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) out.push_back(i);
  }
  std::sort(out.begin(), out.end(), before);
  return out;
}

// Average precision by exhaustive enumeration: every ordering of the
// category's predictions is generated and the one that follows the ranking
// rule (score descending, then image, then input index) is scored. Matching
// takes the unmatched same-category truth of highest IoU >= thr; the area is
// the sum over true positives of the best precision at any rank whose recall
// is at least the recall reached there.
inline std::optional<double> brute_force_ap(const std::vector<ImageDetections>& images,
                                            std::size_t category, double thr = 0.5) {
  struct Pred {
    double score;
    std::size_t image, index;
  };
  std::vector<Pred> preds;
  std::size_t truths = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (const auto& g : images[i].truths) truths += g.category == category;
    for (std::size_t j = 0; j < images[i].predictions.size(); ++j) {
      if (images[i].predictions[j].category == category) {
        preds.push_back({images[i].predictions[j].score, i, j});
      }
    }
  }
  if (truths == 0) return std::nullopt;
  std::vector<std::size_t> perm(preds.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::optional<double> result;
  std::size_t valid_orders = 0;
  do {
    bool ranked = true;
    for (std::size_t k = 1; k < perm.size(); ++k) {
      const Pred& a = preds[perm[k - 1]];
      const Pred& b = preds[perm[k]];
      if (a.score < b.score || (a.score == b.score && perm[k - 1] > perm[k])) ranked = false;
    }
    if (!ranked) continue;
    ++valid_orders;
    std::vector<std::vector<bool>> used(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) used[i].assign(images[i].truths.size(), false);
    std::vector<int> tp;
    for (std::size_t k : perm) {
      const auto& img = images[preds[k].image];
      const Box& box = img.predictions[preds[k].index].box;
      int best = -1;
      double best_iou = -1.0;
      for (std::size_t g = 0; g < img.truths.size(); ++g) {
        if (img.truths[g].category != category || used[preds[k].image][g]) continue;
        const double v = iou(box, img.truths[g].box);
        if (v >= thr && v > best_iou) {
          best_iou = v;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) used[preds[k].image][static_cast<std::size_t>(best)] = true;
      tp.push_back(best >= 0);
    }
    const std::size_t n = tp.size();
    std::vector<double> prec(n), rec(n);
    double hits = 0;
    for (std::size_t k = 0; k < n; ++k) {
      hits += tp[k];
      prec[k] = hits / static_cast<double>(k + 1);
      rec[k] = hits / static_cast<double>(truths);
    }
    double ap = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (!tp[k]) continue;
      double best = 0.0;
      for (std::size_t m = 0; m < n; ++m) {
        if (rec[m] >= rec[k]) best = std::max(best, prec[m]);
      }
      ap += best / static_cast<double>(truths);
    }
    result = ap;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return valid_orders == 1 ? result : std::nullopt;
}

}  // namespace testing
