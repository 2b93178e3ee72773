#include "oadp/distill.hpp"

#include <cmath>
#include <string>

#include "oadp/random.hpp"

namespace oadp {

namespace {

constexpr std::size_t kFirstLevel = 2;
constexpr std::size_t kLastLevel = 6;

Tensor uniform_tensor(Rng& rng, Shape shape, std::size_t fan_in) {
  const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-a, a);
  return t;
}

Vec uniform_vec(Rng& rng, std::size_t n, std::size_t fan_in) {
  return uniform_tensor(rng, {n}, fan_in).values();
}

Tensor as_matrix(std::span<const double> v) {
  return Tensor({1, v.size()}, Vec(v.begin(), v.end()));
}

void check_labels(std::span<const int> labels, std::size_t n,
                  const CategoryTable& table) {
  check(labels.size() == n, ErrorKind::kDimension,
        "rcnn_cls_loss: " + std::to_string(labels.size()) + " labels for " +
            std::to_string(n) + " proposals");
  for (int y : labels) {
    if (y == kBackground) continue;
    check(y >= 0 && static_cast<std::size_t>(y) < table.size(),
          ErrorKind::kInvalidArgument,
          "rcnn_cls_loss: label " + std::to_string(y) + " out of range");
    check(table.is_base(static_cast<std::size_t>(y)), ErrorKind::kInvalidArgument,
          "rcnn_cls_loss: novel category " + table[static_cast<std::size_t>(y)].name +
              " used as a training label");
  }
}

// Position of label y inside the base-then-bg logit vector.
std::size_t restricted_index(int y, const std::vector<std::size_t>& base) {
  if (y == kBackground) return base.size();
  for (std::size_t k = 0; k < base.size(); ++k) {
    if (base[k] == static_cast<std::size_t>(y)) return k;
  }
  fail(ErrorKind::kInvalidArgument, "label is not a base category");
}

}  // namespace

void PyramidWeights::validate() const {
  check(object >= 0.0 && block >= 0.0 && global >= 0.0, ErrorKind::kConfig,
        "pyramid loss weights must be non-negative");
}

double loss_object(const Tensor& student, const Tensor& teacher,
                   Reduction reduction) {
  return l1_distance(student, teacher, reduction);
}

double loss_block(const Tensor& student, const Tensor& teacher,
                  Reduction reduction) {
  return l1_distance(student, teacher, reduction);
}

double loss_global(std::span<const double> student,
                   std::span<const double> teacher, Reduction reduction) {
  check(student.size() == teacher.size(), ErrorKind::kDimension,
        "loss_global: dimension mismatch");
  if (student.empty()) return 0.0;
  return l1_distance(as_matrix(student), as_matrix(teacher), reduction);
}

Vec base_probs_with_bg(std::span<const double> e, const CategoryTable& table,
                       double temperature) {
  check(temperature > 0.0, ErrorKind::kInvalidArgument, "temperature must be positive");
  Vec logits;
  for (std::size_t c : table.base_indices()) {
    logits.push_back(cosine_logit(e, table[c].embedding) / temperature);
  }
  logits.push_back(cosine_logit(e, table.background()) / temperature);
  return softmax(logits);
}

double rcnn_cls_loss(const Tensor& embeddings, std::span<const int> labels,
                     const CategoryTable& table, double temperature) {
  const std::size_t n = embeddings.empty() ? 0 : embeddings.dim(0);
  check_labels(labels, n, table);
  const auto base = table.base_indices();
  double loss = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const Vec probs = base_probs_with_bg(embeddings.row(p), table, temperature);
    loss -= std::log(probs[restricted_index(labels[p], base)]);
  }
  return loss;
}

double total_loss(const LossParts& parts, const PyramidWeights& w) {
  w.validate();
  return parts.rcnn + w.object * parts.object + w.block * parts.block +
         w.global * parts.global;
}

StudentStub::StudentStub(const StudentConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  check(cfg.embed_dim >= 1 && cfg.channels >= 1 && cfg.roi_size >= 1 &&
            cfg.samples_per_bin >= 1,
        ErrorKind::kConfig, "student dimensions must be positive");
  Rng rng(seed);
  for (std::size_t level = kFirstLevel; level <= kLastLevel; ++level) {
    lifts_.push_back(uniform_tensor(rng, {3, cfg.channels}, 3));
  }
  const std::size_t roi_dim = cfg.roi_size * cfg.roi_size * cfg.channels;
  const std::size_t d = cfg.embed_dim;
  object_head_ = uniform_tensor(rng, {roi_dim, d}, roi_dim);
  object_bias_ = uniform_vec(rng, d, roi_dim);
  block_head_ = uniform_tensor(rng, {roi_dim, d}, roi_dim);
  block_bias_ = uniform_vec(rng, d, roi_dim);
  rcnn_head_ = uniform_tensor(rng, {roi_dim, d}, roi_dim);
  rcnn_bias_ = uniform_vec(rng, d, roi_dim);
  global_head_ = uniform_tensor(rng, {cfg.channels, d}, cfg.channels);
  global_bias_ = uniform_vec(rng, d, cfg.channels);
}

std::vector<Tensor> StudentStub::features(const Tensor& image) const {
  check(image.rank() == 3 && image.dim(2) == 3, ErrorKind::kDimension,
        "student expects an H x W x 3 image, got " + shape_string(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = cfg_.channels;
  std::vector<Tensor> levels;
  for (std::size_t level = kFirstLevel; level <= kLastLevel; ++level) {
    const std::size_t stride = std::size_t{1} << level;
    const std::size_t fh = (h + stride - 1) / stride, fw = (w + stride - 1) / stride;
    const Tensor& lift = lifts_[level - kFirstLevel];
    Tensor f({fh, fw, c});
    for (std::size_t i = 0; i < fh; ++i) {
      for (std::size_t j = 0; j < fw; ++j) {
        double rgb[3] = {0.0, 0.0, 0.0};
        std::size_t count = 0;
        for (std::size_t y = i * stride; y < std::min(h, (i + 1) * stride); ++y) {
          for (std::size_t x = j * stride; x < std::min(w, (j + 1) * stride); ++x) {
            for (std::size_t ch = 0; ch < 3; ++ch) rgb[ch] += image(y, x, ch);
            ++count;
          }
        }
        for (double& v : rgb) v /= static_cast<double>(count);
        for (std::size_t k = 0; k < c; ++k) {
          f(i, j, k) = rgb[0] * lift(0, k) + rgb[1] * lift(1, k) + rgb[2] * lift(2, k);
        }
      }
    }
    levels.push_back(std::move(f));
  }
  return levels;
}

Tensor StudentStub::pooled_rois(const Tensor& finest,
                                std::span<const Box> boxes) const {
  const double scale = 1.0 / static_cast<double>(std::size_t{1} << kFirstLevel);
  std::vector<Vec> rows;
  for (const Box& b : boxes) {
    const Box fb(b.x1() * scale, b.y1() * scale, b.x2() * scale, b.y2() * scale);
    rows.push_back(roi_align(finest, fb, cfg_.roi_size, cfg_.samples_per_bin).values());
  }
  return stack_rows(rows);
}

StudentOutputs StudentStub::forward(const Tensor& image,
                                    std::span<const Box> proposals,
                                    std::span<const Box> blocks) const {
  const auto levels = features(image);
  StudentOutputs out;
  if (!proposals.empty()) {
    const Tensor rois = pooled_rois(levels.front(), proposals);
    out.object = linear(rois, object_head_, object_bias_);
    out.rcnn = linear(rois, rcnn_head_, rcnn_bias_);
  }
  if (!blocks.empty()) {
    out.block = linear(pooled_rois(levels.front(), blocks), block_head_, block_bias_);
  }
  out.global = linear(as_matrix(gap(levels.back())), global_head_, global_bias_).values();
  return out;
}

LossParts evaluate_losses(const LossInputs& in) {
  LossParts parts;
  parts.object = loss_object(in.object_student, in.object_teacher, in.reduction);
  parts.block = loss_block(in.block_student, in.block_teacher, in.reduction);
  parts.global = loss_global(in.global_student, in.global_teacher, in.reduction);
  if (in.table != nullptr) {
    parts.rcnn = rcnn_cls_loss(in.rcnn_embeddings, in.labels, *in.table, in.temperature);
  }
  return parts;
}

L1Gradient l1_gradient(const Tensor& student, const Tensor& teacher,
                       Reduction reduction) {
  check(student.shape() == teacher.shape(), ErrorKind::kDimension,
        "l1_gradient: shape mismatch");
  L1Gradient g{student, false};
  if (student.empty()) return g;
  const double scale =
      reduction == Reduction::kMean ? 1.0 / static_cast<double>(student.size()) : 1.0;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const double diff = student[i] - teacher[i];
    if (diff == 0.0) {
      g.tie = true;
      g.grad[i] = 0.0;
    } else {
      g.grad[i] = diff > 0.0 ? scale : -scale;
    }
  }
  return g;
}

Tensor rcnn_cls_gradient(const Tensor& embeddings, std::span<const int> labels,
                         const CategoryTable& table, double temperature) {
  const std::size_t n = embeddings.empty() ? 0 : embeddings.dim(0);
  check_labels(labels, n, table);
  if (n == 0) return Tensor();
  const auto base = table.base_indices();
  std::vector<const Vec*> targets;
  for (std::size_t c : base) targets.push_back(&table[c].embedding);
  targets.push_back(&table.background());

  Tensor grad(embeddings.shape());
  const std::size_t d = embeddings.dim(1);
  for (std::size_t p = 0; p < n; ++p) {
    const auto e = embeddings.row(p);
    double e_norm = 0.0;
    for (double v : e) e_norm += v * v;
    e_norm = std::sqrt(e_norm);
    Vec probs = base_probs_with_bg(e, table, temperature);
    probs[restricted_index(labels[p], base)] -= 1.0;  // dL/dlogit
    auto g = grad.row(p);
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const Vec& t = *targets[k];
      double t_norm = 0.0;
      for (double v : t) t_norm += v * v;
      t_norm = std::sqrt(t_norm);
      const double cos = cosine_logit(e, t);
      // d cos / d e = t / (|e||t|) - cos * e / |e|^2
      const double coeff = probs[k] / temperature;
      for (std::size_t j = 0; j < d; ++j) {
        g[j] += coeff * (t[j] / (e_norm * t_norm) - cos * e[j] / (e_norm * e_norm));
      }
    }
  }
  return grad;
}

LossGradients loss_gradients(const LossInputs& in) {
  LossGradients g;
  g.object = l1_gradient(in.object_student, in.object_teacher, in.reduction);
  g.block = l1_gradient(in.block_student, in.block_teacher, in.reduction);
  if (!in.global_student.empty()) {
    g.global = l1_gradient(as_matrix(in.global_student),
                           as_matrix(in.global_teacher), in.reduction);
  }
  if (in.table != nullptr) {
    g.rcnn = rcnn_cls_gradient(in.rcnn_embeddings, in.labels, *in.table, in.temperature);
  }
  return g;
}

Tensor numeric_gradient(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  check(h > 0.0, ErrorKind::kInvalidArgument, "finite-difference step must be positive");
  if (x.empty()) return Tensor();
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), ErrorKind::kDimension, "relative_error: shape mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return scale == 0.0 ? 0.0 : diff / scale;
}

double GradientCheck::max() const { return std::max({object, block, global, rcnn}); }

namespace {

// Relative error of the L1 gradient over coordinates away from ties.
double check_l1(const Tensor& student, const Tensor& teacher, Reduction reduction,
                double h, std::size_t& near_ties) {
  if (student.empty()) return 0.0;
  const Tensor analytic = l1_gradient(student, teacher, reduction).grad;
  Tensor numeric = numeric_gradient(
      [&](const Tensor& s) {
        return l1_distance(s, teacher, reduction);
      },
      student, h);
  Tensor kept = analytic;
  for (std::size_t i = 0; i < student.size(); ++i) {
    if (std::abs(student[i] - teacher[i]) < 2.0 * h) {
      ++near_ties;
      kept[i] = 0.0;
      numeric[i] = 0.0;
    }
  }
  return relative_error(kept, numeric);
}

}  // namespace

GradientCheck check_gradients(const LossInputs& in, double h) {
  GradientCheck out;
  out.object = check_l1(in.object_student, in.object_teacher, in.reduction, h, out.near_ties);
  out.block = check_l1(in.block_student, in.block_teacher, in.reduction, h, out.near_ties);
  if (!in.global_student.empty()) {
    out.global = check_l1(as_matrix(in.global_student), as_matrix(in.global_teacher),
                          in.reduction, h, out.near_ties);
  }
  if (in.table != nullptr && !in.rcnn_embeddings.empty()) {
    const Tensor analytic =
        rcnn_cls_gradient(in.rcnn_embeddings, in.labels, *in.table, in.temperature);
    const Tensor numeric = numeric_gradient(
        [&](const Tensor& e) {
          return rcnn_cls_loss(e, in.labels, *in.table, in.temperature);
        },
        in.rcnn_embeddings, h);
    out.rcnn = relative_error(analytic, numeric);
  }
  return out;
}

}  // namespace oadp
