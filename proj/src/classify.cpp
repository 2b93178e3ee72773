#include "oadp/classify.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace oadp {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

bool is_zero(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

Vec logits_against(std::span<const double> e, const CategoryTable& table,
                   bool include_bg, double temperature) {
  check(temperature > 0.0, ErrorKind::kInvalidArgument,
        "temperature must be positive");
  check(e.size() == table.dim(), ErrorKind::kDimension,
        "embedding dimension " + std::to_string(e.size()) +
            " does not match category table dimension " +
            std::to_string(table.dim()));
  Vec logits;
  logits.reserve(table.size() + 1);
  for (const auto& c : table.categories()) {
    logits.push_back(cosine_logit(e, c.embedding) / temperature);
  }
  if (include_bg) logits.push_back(cosine_logit(e, table.background()) / temperature);
  return logits;
}

// a^ea * b^eb with ea + eb = 1, exact when both factors agree.
double geometric_mix(double a, double ea, double b, double eb) {
  if (a == b) return a;
  return std::pow(a, ea) * std::pow(b, eb);
}

}  // namespace

CategoryTable::CategoryTable(std::vector<Category> categories, Vec background)
    : categories_(std::move(categories)), background_(std::move(background)) {
  check(!background_.empty() && !is_zero(background_), ErrorKind::kZeroVector,
        "background embedding must be nonzero");
  std::unordered_set<std::string> names;
  bool any_base = false;
  for (const auto& c : categories_) {
    check(names.insert(c.name).second, ErrorKind::kInvalidArgument,
          "duplicate category name " + c.name);
    check(c.embedding.size() == background_.size(), ErrorKind::kDimension,
          "category " + c.name + " has embedding dimension " +
              std::to_string(c.embedding.size()) + ", expected " +
              std::to_string(background_.size()));
    check(!is_zero(c.embedding), ErrorKind::kZeroVector,
          "category " + c.name + " has a zero embedding");
    any_base = any_base || c.split == Split::kBase;
  }
  check(any_base, ErrorKind::kInvalidArgument,
        "category table needs at least one base category");
}

std::optional<std::size_t> CategoryTable::find(const std::string& name) const {
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    if (categories_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::size_t> CategoryTable::base_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (is_base(i)) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> CategoryTable::novel_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (is_novel(i)) out.push_back(i);
  }
  return out;
}

void CalibrationConfig::validate() const {
  check(lambda > 0.0 && lambda < 1.0, ErrorKind::kConfig,
        "calibration lambda must lie in (0, 1)");
}

double cosine_logit(std::span<const double> e, std::span<const double> t) {
  check(e.size() == t.size(), ErrorKind::kDimension,
        "cosine_logit: dimension mismatch");
  const double ne = norm(e), nt = norm(t);
  check(ne > 0.0 && nt > 0.0, ErrorKind::kZeroVector,
        "cosine_logit: zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) dot += e[i] * t[i];
  return std::clamp(dot / (ne * nt), -1.0, 1.0);
}

Vec softmax(std::span<const double> logits) {
  check(!logits.empty(), ErrorKind::kDimension, "softmax of an empty vector");
  const double peak = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Vec probs_with_bg(std::span<const double> e, const CategoryTable& table,
                  double temperature) {
  return softmax(logits_against(e, table, true, temperature));
}

Vec probs_no_bg(std::span<const double> e, const CategoryTable& table,
                double temperature) {
  check(table.size() > 0, ErrorKind::kInvalidArgument, "empty category table");
  return softmax(logits_against(e, table, false, temperature));
}

Vec calibrate(std::span<const double> with_bg, std::span<const double> object,
              const CategoryTable& table, const CalibrationConfig& cfg) {
  cfg.validate();
  const std::size_t n = table.size();
  check(with_bg.size() == n + 1 && object.size() == n, ErrorKind::kDimension,
        "calibrate: expected " + std::to_string(n + 1) + " detector and " +
            std::to_string(n) + " object-head probabilities");
  const double l = cfg.lambda;
  Vec out(n + 1);
  double mass = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double p = with_bg[c], po = object[c];
    out[c] = table.is_base(c) ? geometric_mix(p, l, po, 1.0 - l)
                              : geometric_mix(p, 1.0 - l, po, l);
    mass += p;
  }
  out[n] = 1.0 - mass;
  return out;
}

}  // namespace oadp
