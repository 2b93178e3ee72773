#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "oadp/classify.hpp"
#include "oadp/encoder.hpp"
#include "oadp/geometry.hpp"
#include "oadp/metrics.hpp"

namespace oadp {

// Seeded encoder weights. Linear maps and their biases are uniform in
// [-a, a] with a = 1/sqrt(fan_in); positional embeddings and the [CLS] seed
// use fan_in = d_x; norm gains are 1 and norm biases 0.
EncoderWeights gen_weights(const EncoderConfig& cfg, std::uint64_t seed);

// Mutually orthogonal unit embeddings (Gram-Schmidt over seeded draws) for
// n_base + n_novel categories plus background. Names are "base{i}" and
// "novel{i}". Requires n_base + n_novel + 1 <= dim.
CategoryTable gen_category_table(std::size_t n_base, std::size_t n_novel,
                                 std::size_t dim, std::uint64_t seed);

struct PlantedRect {
  Box box;
  std::size_t category;
};

struct SceneSpec {
  ImageSize size{128, 128};
  std::vector<PlantedRect> objects;
  std::vector<PlantedRect> distractors;
  std::uint64_t seed = 0;
  // Maximum proposal jitter per edge as a fraction of the box side.
  double jitter = 0.05;
};

struct Scene {
  Tensor image;  // H x W x 3 in [0, 1]
  std::vector<Proposal> proposals;  // one per object, objectness = IoU with it
  std::vector<GroundTruth> truths;
};

// Fill colours and stripe layout for a category; the pattern is defined in
// box-relative coordinates so it looks the same at every size.
void paint_category(Tensor& image, const Box& box, std::size_t category);

// Distractors are painted first, objects on top.
Scene gen_scene(const SceneSpec& spec);

struct DistractorSceneOptions {
  ImageSize size{128, 128};
  std::size_t categories = 4;
  std::size_t objects = 3;
  double min_side = 14.0;
  double max_side = 28.0;
  double max_aspect = 2.0;
  // Distractors per object, each flush against one of its sides.
  std::size_t distractors_per_object = 2;
};

// Objects of random categories, each with distractors of other categories
// touching its sides.
SceneSpec random_distractor_scene(std::uint64_t seed,
                                  const DistractorSceneOptions& opts = {});

}  // namespace oadp
