#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oadp/tensor.hpp"

namespace oadp {

enum class Split { kBase, kNovel };

struct Category {
  std::string name;
  Vec embedding;
  Split split = Split::kBase;

  friend bool operator==(const Category&, const Category&) = default;
};

// Categories in insertion order plus the background embedding. Every
// probability vector in the library follows this order, with bg last when
// present.
class CategoryTable {
 public:
  CategoryTable(std::vector<Category> categories, Vec background);

  std::size_t size() const { return categories_.size(); }
  std::size_t dim() const { return background_.size(); }
  const Category& operator[](std::size_t i) const { return categories_[i]; }
  const std::vector<Category>& categories() const { return categories_; }
  const Vec& background() const { return background_; }

  std::optional<std::size_t> find(const std::string& name) const;
  bool is_base(std::size_t i) const { return categories_[i].split == Split::kBase; }
  bool is_novel(std::size_t i) const { return categories_[i].split == Split::kNovel; }
  std::vector<std::size_t> base_indices() const;
  std::vector<std::size_t> novel_indices() const;

 private:
  std::vector<Category> categories_;
  Vec background_;
};

struct CalibrationConfig {
  double lambda = 2.0 / 3.0;
  void validate() const;
};

// Cosine similarity; throws kZeroVector on a zero input.
double cosine_logit(std::span<const double> e, std::span<const double> t);

Vec softmax(std::span<const double> logits);

// Softmax over C and bg (bg last), logits divided by `temperature`.
Vec probs_with_bg(std::span<const double> e, const CategoryTable& table,
                  double temperature = 1.0);

// Softmax over C only.
Vec probs_no_bg(std::span<const double> e, const CategoryTable& table,
                double temperature = 1.0);

// Geometric fusion of detector and object-head probabilities:
//   base c:  P^l * P_O^(1-l)
//   novel c: P^(1-l) * P_O^l
//   bg:      1 - sum_c P(c)
// `with_bg` is probs_with_bg output, `object` is probs_no_bg output. The
// result ranks categories; it is not renormalised.
Vec calibrate(std::span<const double> with_bg, std::span<const double> object,
              const CategoryTable& table, const CalibrationConfig& cfg = {});

}  // namespace oadp
