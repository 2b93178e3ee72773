#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oadp/classify.hpp"
#include "oadp/container.hpp"
#include "oadp/distill.hpp"
#include "oadp/geometry.hpp"
#include "oadp/pseudolabel.hpp"

namespace oadp {

using json = nlohmann::json;

// ---- dataset manifest (JSON-lines) -----------------------------------------
//
// {"image_id": "7", "image": "img7.ppm", "size": [W, H],
//  "proposals": [{"box": [x1, y1, x2, y2], "objectness": 0.9}],
//  "annotations": [{"box": [x1, y1, x2, y2], "category": "cat"}]}

struct Annotation {
  Box box;
  std::string category;
};

struct ManifestEntry {
  std::string image_id;
  std::string image;  // path, relative to the manifest's directory
  ImageSize size;
  std::vector<Proposal> proposals;
  std::vector<Annotation> annotations;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path image_path(const ManifestEntry& e) const;
};

Box box_from_json(const json& j);
json box_to_json(const Box& b);

ManifestEntry manifest_entry_from_json(const json& j);
json manifest_entry_to_json(const ManifestEntry& e);

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries);

// ---- images -----------------------------------------------------------------

// Binary PPM (P6, maxval <= 255) to H x W x 3 floats in [0, 1].
Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& image);

// ".ppm" files are decoded as PPM; anything else is an OADP-TENSORS
// container holding an H x W x 3 entry named "image".
Tensor load_image(const std::filesystem::path& path);

// Loads the entry's image and checks it against the declared size.
Tensor load_manifest_image(const Manifest& m, const ManifestEntry& e);

// ---- category table ---------------------------------------------------------
//
// {"categories": [{"name": ..., "split": "base"|"novel", "embedding": [...]}],
//  "bg_embedding": [...]}
// A top-level array of category objects with one {"bg_embedding": [...]}
// element is accepted as well.

CategoryTable category_table_from_json(const json& j);
json category_table_to_json(const CategoryTable& t);
CategoryTable read_category_table(const std::filesystem::path& path);
void write_category_table(const std::filesystem::path& path, const CategoryTable& t);

// ---- run configuration ------------------------------------------------------

struct RunConfig {
  double scale_ratio = 1.0;  // "r"
  double lambda = 2.0 / 3.0;
  double gamma = 0.3;
  PyramidWeights weights;    // "w_O", "w_B", "w_G"
  std::optional<std::size_t> resolution;  // "R"; defaults to the encoder's
  double nms_iou = 0.5;
  double score_threshold = 0.0;
  std::size_t max_per_image = 100;
  std::uint64_t seed = 0;
  DType precision = DType::kF64;  // "f64" | "f32" for written tensors
  bool all_novel_candidates = false;
  std::size_t threads = 1;

  PLConfig pl_config() const;
  void validate() const;
};

RunConfig run_config_from_json(const json& j);
json run_config_to_json(const RunConfig& c);
RunConfig read_run_config(const std::filesystem::path& path);

// ---- pseudo labels (JSON-lines) ---------------------------------------------
//
// {"image_id": "7", "pls": [{"box": [x1, y1, x2, y2], "category": "name",
//                            "score": 0.41}]}

struct PLRecord {
  std::string image_id;
  std::vector<PseudoLabel> labels;
};

json pl_record_to_json(const PLRecord& r, const CategoryTable& table);
std::string pl_records_to_jsonl(const std::vector<PLRecord>& records,
                                 const CategoryTable& table);

// Category names are kept as strings since a PL file may be read without
// its table.
struct NamedPL {
  Box box;
  std::string category;
  double score;
};
struct NamedPLRecord {
  std::string image_id;
  std::vector<NamedPL> labels;
};
std::vector<NamedPLRecord> read_pl_file(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
json parse_json(const std::string& text, const std::string& what);

}  // namespace oadp
