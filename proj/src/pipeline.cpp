#include "oadp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "oadp/metrics.hpp"
#include "oadp/random.hpp"

namespace oadp {

namespace fs = std::filesystem;

std::string proposal_key(const std::string& image_id, std::size_t j) {
  return "img" + image_id + "/prop" + std::to_string(j);
}

std::string global_key(const std::string& image_id) { return "img" + image_id + "/global"; }

std::string block_key(const std::string& image_id, std::size_t k) {
  return "img" + image_id + "/block" + std::to_string(k);
}

std::size_t run_resolution(const RunConfig& cfg, const EncoderWeights& w) {
  const std::size_t r = w.config.resolution;
  if (cfg.resolution) {
    check(*cfg.resolution == r, ErrorKind::kConfig,
          "config R = " + std::to_string(*cfg.resolution) +
              " does not match the encoder input size " + std::to_string(r));
  }
  return r;
}

namespace {

std::size_t aligned_side(std::size_t side, std::size_t r) {
  return std::max<std::size_t>(1, (side + r / 2) / r) * r;
}

Tensor as_rows(const std::vector<Vec>& rows) {
  if (rows.empty()) return Tensor();
  return stack_rows(rows);
}

json loss_parts_json(const LossParts& p, const PyramidWeights& w) {
  return {{"rcnn", p.rcnn},
          {"object", p.object},
          {"block", p.block},
          {"global", p.global},
          {"total", total_loss(p, w)}};
}

}  // namespace

Tensor block_aligned_image(const Tensor& image, std::size_t resolution) {
  const std::size_t w = aligned_side(image.dim(1), resolution);
  const std::size_t h = aligned_side(image.dim(0), resolution);
  if (w == image.dim(1) && h == image.dim(0)) return image;
  return bilinear_resize(image, h, w);
}

std::vector<Box> block_boxes(const ImageSize& size, std::size_t resolution) {
  const std::size_t w = aligned_side(size.width, resolution);
  const std::size_t h = aligned_side(size.height, resolution);
  const double sx = static_cast<double>(size.width) / static_cast<double>(w);
  const double sy = static_cast<double>(size.height) / static_cast<double>(h);
  std::vector<Box> out;
  for (const Box& b : partition_blocks(ImageSize(w, h), resolution)) {
    out.emplace_back(b.x1() * sx, b.y1() * sy, b.x2() * sx, b.y2() * sy);
  }
  return out;
}

TensorContainer run_oake(const Manifest& manifest, const EncoderWeights& w,
                         const RunConfig& cfg, OakeSummary* summary) {
  cfg.validate();
  const std::size_t r = run_resolution(cfg, w);
  TensorContainer out;
  if (!manifest.entries.empty()) out.add(kResolutionKey, Vec{static_cast<double>(r)});
  OakeSummary s;
  for (const auto& entry : manifest.entries) {
    const Tensor image = load_manifest_image(manifest, entry);
    std::vector<std::optional<Vec>> embeddings(entry.proposals.size());
    parallel_for(entry.proposals.size(), cfg.threads, [&](std::size_t j) {
      try {
        embeddings[j] =
            extract_object_embedding(image, entry.proposals[j].box, cfg.scale_ratio, w);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kEmptyObjectMask) throw;
      }
    });
    for (std::size_t j = 0; j < embeddings.size(); ++j) {
      if (!embeddings[j]) {
        ++s.skipped;
        continue;
      }
      out.add(proposal_key(entry.image_id, j), *embeddings[j], cfg.precision);
    }
    out.add(global_key(entry.image_id), encode_global(image, w), cfg.precision);
    const auto blocks = encode_blocks(block_aligned_image(image, r), w);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      out.add(block_key(entry.image_id, k), blocks[k], cfg.precision);
    }
    ++s.images;
    s.proposals += entry.proposals.size();
  }
  if (summary != nullptr) *summary = s;
  return out;
}

std::vector<PLRecord> run_pl(const Manifest& manifest, const EncoderWeights& w,
                             const CategoryTable& table, const RunConfig& cfg,
                             std::size_t* skipped) {
  cfg.validate();
  run_resolution(cfg, w);
  check(table.dim() == w.config.embed_dim, ErrorKind::kDimension,
        "category embeddings have dimension " + std::to_string(table.dim()) +
            " but the encoder emits " + std::to_string(w.config.embed_dim));
  std::vector<PLRecord> out;
  std::size_t total_skipped = 0;
  for (const auto& entry : manifest.entries) {
    const Tensor image = load_manifest_image(manifest, entry);
    PLResult r = generate_pls(image, entry.proposals, w, table, cfg.scale_ratio,
                              cfg.pl_config());
    total_skipped += r.skipped;
    out.push_back({entry.image_id, std::move(r.labels)});
  }
  if (skipped != nullptr) *skipped = total_skipped;
  return out;
}

int proposal_label(const Box& proposal, std::span<const Annotation> annotations,
                   const CategoryTable& table) {
  double best = 0.0;
  const Annotation* match = nullptr;
  for (const auto& a : annotations) {
    const double v = iou(proposal, a.box);
    if (v > best) {
      best = v;
      match = &a;
    }
  }
  if (match == nullptr || best < 0.5) return kBackground;
  const auto c = table.find(match->category);
  check(c.has_value(), ErrorKind::kFormat,
        "annotation category '" + match->category + "' is not in the table");
  return table.is_base(*c) ? static_cast<int>(*c) : kBackground;
}

json run_losses(const Manifest& manifest, const TensorContainer& teacher,
                const CategoryTable* table, const RunConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  json images = json::array();
  LossParts sum;
  GradientCheck worst;
  std::size_t checked = 0;
  std::size_t dim = 0;
  std::size_t resolution = cfg.resolution.value_or(0);
  for (const auto& e : teacher.entries()) {
    if (e.name == kResolutionKey) {
      resolution = static_cast<std::size_t>(e.tensor[0]);
      check(!cfg.resolution || *cfg.resolution == resolution, ErrorKind::kConfig,
            "config R disagrees with the teacher embeddings");
    } else {
      dim = std::max(dim, e.tensor.size());
    }
  }
  if (table != nullptr) {
    check(dim == 0 || dim == table->dim(), ErrorKind::kDimension,
          "teacher embeddings and category table disagree on dimension");
    dim = table->dim();
  }
  StudentConfig scfg;
  if (dim > 0) scfg.embed_dim = dim;
  const StudentStub student(scfg, seed);

  for (const auto& entry : manifest.entries) {
    const Tensor image = load_manifest_image(manifest, entry);
    const std::string gkey = global_key(entry.image_id);
    check(teacher.contains(gkey), ErrorKind::kFormat,
          "teacher embeddings have no entry for image " + entry.image_id);
    const Vec global_teacher = teacher.get_vec(gkey);
    std::vector<Box> boxes;
    std::vector<Vec> object_teacher;
    std::vector<int> labels;
    for (std::size_t j = 0; j < entry.proposals.size(); ++j) {
      const std::string key = proposal_key(entry.image_id, j);
      if (!teacher.contains(key)) continue;  // skipped by oake
      boxes.push_back(entry.proposals[j].box);
      object_teacher.push_back(teacher.get_vec(key));
      if (table != nullptr) {
        labels.push_back(proposal_label(entry.proposals[j].box, entry.annotations, *table));
      }
    }
    std::vector<Vec> block_teacher;
    while (teacher.contains(block_key(entry.image_id, block_teacher.size()))) {
      block_teacher.push_back(teacher.get_vec(block_key(entry.image_id, block_teacher.size())));
    }
    std::vector<Box> blocks;
    if (!block_teacher.empty()) {
      check(resolution > 0, ErrorKind::kFormat,
            "teacher embeddings carry blocks but no block resolution");
      blocks = block_boxes(entry.size, resolution);
      check(blocks.size() == block_teacher.size(), ErrorKind::kFormat,
            "image " + entry.image_id + " has " + std::to_string(block_teacher.size()) +
                " teacher blocks, expected " + std::to_string(blocks.size()));
    }

    const StudentOutputs out = student.forward(image, boxes, blocks);
    LossInputs in;
    in.object_student = out.object;
    in.object_teacher = as_rows(object_teacher);
    in.block_student = out.block;
    in.block_teacher = as_rows(block_teacher);
    in.global_student = out.global;
    in.global_teacher = global_teacher;
    if (table != nullptr) {
      in.rcnn_embeddings = out.rcnn;
      in.labels = labels;
      in.table = table;
    }
    const LossParts parts = evaluate_losses(in);
    const GradientCheck g = check_gradients(in);
    worst.object = std::max(worst.object, g.object);
    worst.block = std::max(worst.block, g.block);
    worst.global = std::max(worst.global, g.global);
    worst.rcnn = std::max(worst.rcnn, g.rcnn);
    worst.near_ties += g.near_ties;
    ++checked;
    sum.rcnn += parts.rcnn;
    sum.object += parts.object;
    sum.block += parts.block;
    sum.global += parts.global;
    json item = loss_parts_json(parts, cfg.weights);
    item["image_id"] = entry.image_id;
    item["proposals"] = boxes.size();
    item["blocks"] = blocks.size();
    images.push_back(item);
  }
  const double n = checked == 0 ? 1.0 : static_cast<double>(checked);
  const LossParts mean{sum.rcnn / n, sum.object / n, sum.block / n, sum.global / n};
  return {{"seed", seed},
          {"images", images},
          {"mean", loss_parts_json(mean, cfg.weights)},
          {"weights", {{"w_O", cfg.weights.object}, {"w_B", cfg.weights.block},
                       {"w_G", cfg.weights.global}}},
          {"gradient_check",
           {{"images", checked},
            {"step", 1e-5},
            {"max_relative_error",
             {{"object", worst.object}, {"block", worst.block},
              {"global", worst.global}, {"rcnn", worst.rcnn}}},
            {"near_ties", worst.near_ties},
            {"passed", worst.max() < 1e-4}}}};
}

json run_eval(std::span<const NamedPLRecord> pls, const Manifest& manifest) {
  std::map<std::string, std::size_t> image_index;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    image_index[manifest.entries[i].image_id] = i;
  }
  std::set<std::string> names;
  for (const auto& e : manifest.entries) {
    for (const auto& a : e.annotations) names.insert(a.category);
  }
  for (const auto& r : pls) {
    check(image_index.count(r.image_id) > 0, ErrorKind::kFormat,
          "pseudo labels reference unknown image " + r.image_id);
    for (const auto& l : r.labels) names.insert(l.category);
  }
  const std::vector<std::string> categories(names.begin(), names.end());
  const auto index_of = [&](const std::string& name) {
    return static_cast<std::size_t>(
        std::lower_bound(categories.begin(), categories.end(), name) - categories.begin());
  };

  std::vector<ImageDetections> images(manifest.entries.size());
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    for (const auto& a : manifest.entries[i].annotations) {
      images[i].truths.push_back({a.box, index_of(a.category)});
    }
  }
  for (const auto& r : pls) {
    auto& img = images[image_index[r.image_id]];
    for (const auto& l : r.labels) {
      img.predictions.push_back({l.box, index_of(l.category), l.score});
    }
  }

  // Each ground-truth object takes the label of its best-overlapping PL.
  std::vector<ClassificationRecord> records;
  for (const auto& img : images) {
    for (const auto& t : img.truths) {
      double best = 0.0;
      std::optional<std::size_t> label;
      for (const auto& p : img.predictions) {
        const double v = iou(t.box, p.box);
        if (v >= 0.5 && v > best) {
          best = v;
          label = p.category;
        }
      }
      records.push_back({t.category, label});
    }
  }

  json per_category = json::object();
  double ap_sum = 0.0;
  std::size_t ap_count = 0;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    if (const auto ap = ap50(images, c)) {
      per_category[categories[c]] = *ap;
      ap_sum += *ap;
      ++ap_count;
    }
  }
  std::vector<std::vector<PseudoLabel>> per_image;
  for (const auto& img : images) per_image.push_back(img.predictions);
  const PLStats stats = pl_stats(per_image);
  json counts = json::object();
  for (const auto& [c, n] : stats.per_category) counts[categories[c]] = n;

  return {{"images", manifest.entries.size()},
          {"objects", records.size()},
          {"macro_precision", records.empty() ? 0.0 : macro_precision(records)},
          {"weighted_precision", records.empty() ? 0.0 : weighted_precision(records)},
          {"ap50_per_category", per_category},
          {"map50", ap_count == 0 ? 0.0 : ap_sum / static_cast<double>(ap_count)},
          {"pl_total", stats.total},
          {"pl_per_image", stats.per_image},
          {"pl_per_category", counts}};
}

std::vector<Scene> crop_trial_scenes(const CropTrialConfig& cfg) {
  DistractorSceneOptions opts;
  opts.categories = cfg.categories;
  Rng rng(cfg.seed);
  std::vector<Scene> scenes;
  for (std::size_t k = 0; k < cfg.scenes; ++k) {
    scenes.push_back(gen_scene(random_distractor_scene(rng.next(), opts)));
  }
  return scenes;
}

CropGrid run_crop_trial(const CropTrialConfig& cfg, std::span<const CropStrategy> strategies,
                        std::span<const bool> maskings) {
  const EncoderWeights w = gen_weights(cfg.encoder, cfg.seed);
  const CategoryTable table = prototype_table(w, cfg.categories, cfg.crops);
  const auto scenes = crop_trial_scenes(cfg);
  return compare_crops(scenes, w, table, strategies, maskings, cfg.crops);
}

json crop_grid_to_json(const CropGrid& grid) {
  json cells = json::array();
  for (const auto& c : grid.cells) {
    cells.push_back({{"strategy", strategy_name(c.strategy)},
                     {"masked", c.masked},
                     {"objects", c.objects},
                     {"macro_precision", c.macro_precision},
                     {"weighted_precision", c.weighted_precision}});
  }
  return cells;
}

SceneSpec scene_spec_from_json(const json& j) {
  try {
    SceneSpec s;
    if (j.contains("size")) {
      const auto size = j.at("size").get<std::vector<std::size_t>>();
      check(size.size() == 2, ErrorKind::kFormat, "scene size must be [W, H]");
      s.size = ImageSize(size[0], size[1]);
    }
    const auto rects = [&](const char* key) {
      std::vector<PlantedRect> out;
      if (j.contains(key)) {
        for (const auto& r : j.at(key)) {
          out.push_back({box_from_json(r.at("box")), r.at("category").get<std::size_t>()});
        }
      }
      return out;
    };
    s.objects = rects("objects");
    s.distractors = rects("distractors");
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("jitter")) s.jitter = j.at("jitter").get<double>();
    return s;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("scene spec: ") + e.what());
  }
}

json scene_spec_to_json(const SceneSpec& s) {
  const auto rects = [](const std::vector<PlantedRect>& v) {
    json out = json::array();
    for (const auto& r : v) out.push_back({{"box", box_to_json(r.box)}, {"category", r.category}});
    return out;
  };
  return {{"size", json::array({s.size.width, s.size.height})},
          {"seed", s.seed},
          {"jitter", s.jitter},
          {"objects", rects(s.objects)},
          {"distractors", rects(s.distractors)}};
}

void write_synthetic_dataset(const fs::path& dir, const SynthOptions& opts) {
  fs::create_directories(dir);
  const CategoryTable table =
      gen_category_table(opts.base, opts.novel, opts.encoder.embed_dim, opts.seed);
  const EncoderWeights w = gen_weights(opts.encoder, opts.seed);
  DistractorSceneOptions scene_opts;
  scene_opts.categories = table.size();
  scene_opts.objects = opts.objects;
  scene_opts.distractors_per_object = 0;
  Rng rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < opts.images; ++i) {
    const SceneSpec spec = random_distractor_scene(rng.next(), scene_opts);
    const Scene scene = gen_scene(spec);
    ManifestEntry e;
    e.image_id = std::to_string(i);
    e.image = "img" + e.image_id + ".ppm";
    e.size = spec.size;
    e.proposals = scene.proposals;
    for (const auto& t : scene.truths) e.annotations.push_back({t.box, table[t.category].name});
    write_ppm(dir / e.image, scene.image);
    entries.push_back(std::move(e));
  }
  write_manifest(dir / "manifest.jsonl", entries);
  write_category_table(dir / "table.json", table);
  save_weights(w, dir / "weights.oadpt", opts.precision);
}

}  // namespace oadp
