// oadp command-line tool: oake, pl, losses, compare-crops, eval, synth.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "oadp/pipeline.hpp"

namespace fs = std::filesystem;
using namespace oadp;

namespace {

RunConfig load_config(const std::string& path) {
  return path.empty() ? RunConfig{} : read_run_config(path);
}

void emit(const json& j, const std::string& out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
  }
}

// std::vector<bool> has no contiguous storage, hence the fixed array.
std::size_t parse_masked(const std::string& v, bool (&flags)[2]) {
  if (v == "true" || v == "false") {
    flags[0] = v == "true";
    return 1;
  }
  check(v == "both", ErrorKind::kConfig, "--masked must be true, false or both");
  flags[0] = false;
  flags[1] = true;
  return 2;
}

bool is_count(const std::string& s) {
  return !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
}

struct CropArgs {
  std::string scenes = "30";
  std::size_t seeds = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> strategies{"mbs", "fixed", "adaptive"};
  std::string masked = "both";
  std::size_t categories = 8;
  double fixed_side = 64.0;
  double adaptive_ratio = 4.0;
  std::size_t threads = 1;
  std::string weights, table, out;
};

json compare_crops_cmd(const CropArgs& a) {
  std::vector<CropStrategy> strategies;
  for (const auto& s : a.strategies) strategies.push_back(parse_strategy(s));
  bool maskings[2] = {false, false};
  const std::span<const bool> masks(maskings, parse_masked(a.masked, maskings));

  CropExperimentConfig crops;
  crops.fixed_side = a.fixed_side;
  crops.adaptive_ratio = a.adaptive_ratio;
  crops.threads = a.threads;

  json trials = json::array();
  if (!is_count(a.scenes)) {
    // Explicit scene specs.
    const json specs = parse_json(read_text(a.scenes), a.scenes);
    check(specs.is_array(), ErrorKind::kFormat, "scene file must hold a JSON array");
    std::vector<Scene> scenes;
    std::size_t categories = 0;
    for (const auto& j : specs) {
      const SceneSpec s = scene_spec_from_json(j);
      for (const auto& o : s.objects) categories = std::max(categories, o.category + 1);
      for (const auto& d : s.distractors) categories = std::max(categories, d.category + 1);
      scenes.push_back(gen_scene(s));
    }
    const EncoderWeights w = a.weights.empty() ? gen_weights({}, a.seed) : load_weights(a.weights);
    const CategoryTable table = a.table.empty()
                                    ? prototype_table(w, std::max<std::size_t>(categories, 1), crops)
                                    : read_category_table(a.table);
    const CropGrid grid = compare_crops(scenes, w, table, strategies, masks, crops);
    trials.push_back({{"seed", a.seed}, {"scenes", scenes.size()}, {"cells", crop_grid_to_json(grid)}});
    return {{"trials", trials}};
  }

  check(a.weights.empty() && a.table.empty(), ErrorKind::kConfig,
        "--weights and --table apply only to a scene file");
  const std::size_t count = std::stoul(a.scenes);
  std::size_t adaptive_wins = 0;
  for (std::size_t s = 0; s < a.seeds; ++s) {
    CropTrialConfig cfg;
    cfg.seed = a.seed + s;
    cfg.scenes = count;
    cfg.categories = a.categories;
    cfg.crops = crops;
    const CropGrid grid = run_crop_trial(cfg, strategies, masks);
    double best = 0.0;
    for (const auto& c : grid.cells) best = std::max(best, c.macro_precision);
    const GridCell* ma = grid.find(CropStrategy::kAdaptive, true);
    if (ma != nullptr && ma->macro_precision >= best) ++adaptive_wins;
    trials.push_back({{"seed", cfg.seed}, {"scenes", count}, {"cells", crop_grid_to_json(grid)}});
  }
  return {{"trials", trials},
          {"masked_adaptive_best_fraction",
           a.seeds == 0 ? 0.0 : static_cast<double>(adaptive_wins) / static_cast<double>(a.seeds)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-aware distillation pipeline tools"};
  app.require_subcommand(1);

  std::string manifest, weights, table, config, out, teacher, pl_path;
  std::uint64_t seed = 0;

  auto* oake = app.add_subcommand("oake", "Extract per-proposal teacher embeddings");
  oake->add_option("--manifest", manifest, "Dataset manifest (JSON-lines)")->required();
  oake->add_option("--weights", weights, "Encoder weights (OADP-TENSORS)")->required();
  oake->add_option("--table", table, "Category table (checked against the encoder)");
  oake->add_option("--config", config, "Run configuration (JSON)");
  oake->add_option("--out", out, "Output container")->required();

  auto* pl = app.add_subcommand("pl", "Generate pseudo labels for novel categories");
  pl->add_option("--manifest", manifest)->required();
  pl->add_option("--weights", weights)->required();
  pl->add_option("--table", table)->required();
  pl->add_option("--config", config);
  pl->add_option("--out", out, "Output JSON-lines file")->required();

  auto* losses = app.add_subcommand("losses", "Student forward, distillation losses and gradient check");
  losses->add_option("--manifest", manifest)->required();
  losses->add_option("--teacher-embeddings", teacher, "Container written by oake")->required();
  losses->add_option("--seed", seed, "Student initialisation seed");
  losses->add_option("--table", table, "Category table; enables the R-CNN term");
  losses->add_option("--config", config);
  losses->add_option("--out", out, "Report path (stdout when omitted)");

  CropArgs crop;
  auto* cc = app.add_subcommand("compare-crops", "Crop strategy and masking grid on synthetic scenes");
  cc->add_option("--scenes", crop.scenes, "Scenes per seed, or a JSON file of scene specs");
  cc->add_option("--seeds", crop.seeds, "Number of consecutive seeds");
  cc->add_option("--seed", crop.seed, "First seed");
  cc->add_option("--strategies", crop.strategies, "mbs, fixed, adaptive")->delimiter(',');
  cc->add_option("--masked", crop.masked, "true, false or both");
  cc->add_option("--categories", crop.categories);
  cc->add_option("--fixed-side", crop.fixed_side);
  cc->add_option("--adaptive-ratio", crop.adaptive_ratio);
  cc->add_option("--threads", crop.threads);
  cc->add_option("--weights", crop.weights, "Encoder weights (scene file only)");
  cc->add_option("--table", crop.table, "Category table (scene file only)");
  cc->add_option("--out", crop.out);

  auto* ev = app.add_subcommand("eval", "Pseudo-label metrics against manifest annotations");
  ev->add_option("--pl", pl_path, "Pseudo labels (JSON-lines)")->required();
  ev->add_option("--manifest", manifest)->required();
  ev->add_option("--out", out);

  SynthOptions synth_opts;
  std::string precision = "f64";
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--images", synth_opts.images);
  synth->add_option("--base", synth_opts.base);
  synth->add_option("--novel", synth_opts.novel);
  synth->add_option("--objects", synth_opts.objects);
  synth->add_option("--seed", synth_opts.seed);
  synth->add_option("--precision", precision)->check(CLI::IsMember({"f32", "f64"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "usage_error"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (oake->parsed()) {
      const RunConfig cfg = load_config(config);
      const EncoderWeights w = load_weights(weights);
      if (!table.empty()) {
        const CategoryTable t = read_category_table(table);
        check(t.dim() == w.config.embed_dim, ErrorKind::kDimension,
              "category table dimension does not match the encoder");
      }
      OakeSummary summary;
      const TensorContainer c = run_oake(read_manifest(manifest), w, cfg, &summary);
      write_container(out, c);
      std::cout << json{{"images", summary.images},
                        {"proposals", summary.proposals},
                        {"skipped", summary.skipped}}.dump()
                << "\n";
    } else if (pl->parsed()) {
      const RunConfig cfg = load_config(config);
      const CategoryTable t = read_category_table(table);
      std::size_t skipped = 0;
      const auto records = run_pl(read_manifest(manifest), load_weights(weights), t, cfg, &skipped);
      write_file_atomic(out, pl_records_to_jsonl(records, t));
      std::size_t total = 0;
      for (const auto& r : records) total += r.labels.size();
      std::cout << json{{"images", records.size()}, {"pls", total}, {"skipped", skipped}}.dump()
                << "\n";
    } else if (losses->parsed()) {
      const RunConfig cfg = load_config(config);
      std::optional<CategoryTable> t;
      if (!table.empty()) t = read_category_table(table);
      emit(run_losses(read_manifest(manifest), read_container(teacher), t ? &*t : nullptr, cfg,
                      seed),
           out);
    } else if (cc->parsed()) {
      emit(compare_crops_cmd(crop), crop.out);
    } else if (ev->parsed()) {
      const auto pls = read_pl_file(pl_path);
      emit(run_eval(pls, read_manifest(manifest)), out);
    } else if (synth->parsed()) {
      synth_opts.precision = precision == "f32" ? DType::kF32 : DType::kF64;
      write_synthetic_dataset(out, synth_opts);
    }
  } catch (const Error& e) {
    std::cerr << json{{"error", error_kind_name(e.kind())}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal_error"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
