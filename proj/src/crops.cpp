#include "oadp/crops.hpp"

#include <algorithm>
#include <cmath>

#include "oadp/metrics.hpp"
#include "oadp/pseudolabel.hpp"

namespace oadp {

std::string strategy_name(CropStrategy s) {
  switch (s) {
    case CropStrategy::kMbs: return "mbs";
    case CropStrategy::kFixed: return "fixed";
    case CropStrategy::kAdaptive: return "adaptive";
  }
  return "unknown";
}

CropStrategy parse_strategy(const std::string& name) {
  if (name == "mbs") return CropStrategy::kMbs;
  if (name == "fixed") return CropStrategy::kFixed;
  if (name == "adaptive") return CropStrategy::kAdaptive;
  fail(ErrorKind::kConfig, "unknown crop strategy '" + name +
                               "' (expected mbs, fixed or adaptive)");
}

Box crop_square(const Box& object, CropStrategy strategy, const ImageSize& image,
                const CropExperimentConfig& cfg) {
  double ratio = 1.0;
  switch (strategy) {
    case CropStrategy::kMbs: {
      const double side = std::max(object.width(), object.height());
      ratio = side * side / object.area();
      break;
    }
    case CropStrategy::kFixed:
      check(cfg.fixed_side > 0.0, ErrorKind::kConfig, "fixed side must be positive");
      ratio = cfg.fixed_side * cfg.fixed_side / object.area();
      break;
    case CropStrategy::kAdaptive:
      ratio = cfg.adaptive_ratio;
      break;
  }
  return transform_proposal(object, ratio, image);
}

std::size_t classify_object(const Tensor& image, const Box& object,
                            CropStrategy strategy, bool masked,
                            const EncoderWeights& w, const CategoryTable& table,
                            const CropExperimentConfig& cfg) {
  const ImageSize size(image.dim(1), image.dim(0));
  const std::size_t r = w.config.resolution;
  const Box square = crop_square(object, strategy, size, cfg);
  const Tensor crop = crop_and_resize(image, square, r, r);
  Vec e;
  if (masked) {
    const BinaryMask m = patch_overlap_mask(object, square, r, w.config.patch,
                                            w.config.token_count());
    e = encode_obj(crop, w, m);
  } else {
    e = encode_cls(crop, w);
  }
  const Vec probs = probs_no_bg(e, table);
  return static_cast<std::size_t>(
      std::max_element(probs.begin(), probs.end()) - probs.begin());
}

const GridCell* CropGrid::find(CropStrategy s, bool masked) const {
  for (const auto& c : cells) {
    if (c.strategy == s && c.masked == masked) return &c;
  }
  return nullptr;
}

CropGrid compare_crops(std::span<const Scene> scenes, const EncoderWeights& w,
                       const CategoryTable& table,
                       std::span<const CropStrategy> strategies,
                       std::span<const bool> maskings,
                       const CropExperimentConfig& cfg) {
  struct Job {
    std::size_t scene, object;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (std::size_t o = 0; o < scenes[s].truths.size(); ++o) jobs.push_back({s, o});
  }

  CropGrid grid;
  for (CropStrategy strategy : strategies) {
    for (bool masked : maskings) {
      std::vector<ClassificationRecord> records(jobs.size(), {0, std::nullopt});
      parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
        const auto& gt = scenes[jobs[i].scene].truths[jobs[i].object];
        records[i] = {gt.category,
                      classify_object(scenes[jobs[i].scene].image, gt.box, strategy,
                                      masked, w, table, cfg)};
      });
      GridCell cell{strategy, masked};
      cell.objects = records.size();
      if (!records.empty()) {
        cell.macro_precision = macro_precision(records);
        cell.weighted_precision = weighted_precision(records);
      }
      grid.cells.push_back(cell);
    }
  }
  return grid;
}

CategoryTable prototype_table(const EncoderWeights& w, std::size_t categories,
                              const CropExperimentConfig& cfg) {
  const std::size_t r = w.config.resolution;
  const double side = static_cast<double>(r);
  const double object = side / std::sqrt(cfg.adaptive_ratio);
  const double lo = 0.5 * (side - object);
  const Box footprint(lo, lo, lo + object, lo + object);
  const BinaryMask mask = patch_overlap_mask(footprint, Box(0.0, 0.0, side, side), r,
                                             w.config.patch, w.config.token_count());
  const auto unit = [](Vec v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
  };
  Tensor blank({r, r, 3}, 0.5);
  std::vector<Category> cats;
  for (std::size_t c = 0; c < categories; ++c) {
    Tensor canvas = blank;
    paint_category(canvas, footprint, c);
    // Midpoint of the [CLS] and [OBJ] views of the same rendering.
    const Vec a = unit(encode_cls(canvas, w));
    const Vec b = unit(encode_obj(canvas, w, mask));
    Vec e(a.size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = a[i] + b[i];
    cats.push_back({"cat" + std::to_string(c), std::move(e), Split::kBase});
  }
  return CategoryTable(std::move(cats), encode_cls(blank, w));
}

}  // namespace oadp
