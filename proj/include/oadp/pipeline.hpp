#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oadp/crops.hpp"
#include "oadp/io.hpp"

namespace oadp {

// Container entry names written by `oake`. The block side R is stored
// alongside so `losses` can rebuild the block grid.
inline const std::string kResolutionKey = "meta/resolution";
std::string proposal_key(const std::string& image_id, std::size_t j);
std::string global_key(const std::string& image_id);
std::string block_key(const std::string& image_id, std::size_t k);

// Resolution R for a run: the config's "R" when set (it must agree with the
// encoder), otherwise the encoder's input size.
std::size_t run_resolution(const RunConfig& cfg, const EncoderWeights& w);

// The image resampled so both sides are multiples of R (nearest multiple,
// at least R), and the R x R blocks of that grid mapped back to the
// original image's coordinates.
Tensor block_aligned_image(const Tensor& image, std::size_t resolution);
std::vector<Box> block_boxes(const ImageSize& size, std::size_t resolution);

struct OakeSummary {
  std::size_t images = 0;
  std::size_t proposals = 0;
  std::size_t skipped = 0;  // proposals with an empty object mask
};

// Teacher embeddings for every image of the manifest: one entry per
// proposal, the global embedding and the block embeddings.
TensorContainer run_oake(const Manifest& manifest, const EncoderWeights& w,
                         const RunConfig& cfg, OakeSummary* summary = nullptr);

std::vector<PLRecord> run_pl(const Manifest& manifest, const EncoderWeights& w,
                             const CategoryTable& table, const RunConfig& cfg,
                             std::size_t* skipped = nullptr);

// Label for the R-CNN term: the base category of the best-IoU annotation
// when that IoU reaches 0.5, background otherwise.
int proposal_label(const Box& proposal, std::span<const Annotation> annotations,
                   const CategoryTable& table);

// Student forward on every image plus all loss terms and a finite-difference
// check of their gradients. Without a table the R-CNN term is left out.
json run_losses(const Manifest& manifest, const TensorContainer& teacher,
                const CategoryTable* table, const RunConfig& cfg,
                std::uint64_t seed);

json run_eval(std::span<const NamedPLRecord> pls, const Manifest& manifest);

// One seed of the crop comparison: toy weights from the seed, a prototype
// table and `scenes` random distractor scenes.
struct CropTrialConfig {
  std::uint64_t seed = 0;
  std::size_t scenes = 30;
  std::size_t categories = 8;
  EncoderConfig encoder;
  CropExperimentConfig crops;
};
std::vector<Scene> crop_trial_scenes(const CropTrialConfig& cfg);
CropGrid run_crop_trial(const CropTrialConfig& cfg,
                        std::span<const CropStrategy> strategies,
                        std::span<const bool> maskings);
json crop_grid_to_json(const CropGrid& grid);

// Scene specs as JSON: {"size": [W, H], "seed": n, "jitter": f,
//  "objects": [{"box": [...], "category": i}], "distractors": [...]}
SceneSpec scene_spec_from_json(const json& j);
json scene_spec_to_json(const SceneSpec& s);

struct SynthOptions {
  std::size_t images = 4;
  std::size_t base = 3;
  std::size_t novel = 2;
  std::size_t objects = 3;
  std::uint64_t seed = 0;
  EncoderConfig encoder;
  DType precision = DType::kF64;
};

// Writes manifest.jsonl, img{i}.ppm, table.json and weights.oadpt under
// `dir`. Objects are painted with their category's pattern; annotations
// name every object, proposals are jittered copies of them.
void write_synthetic_dataset(const std::filesystem::path& dir, const SynthOptions& opts);

}  // namespace oadp
