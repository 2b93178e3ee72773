#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "oadp/box.hpp"
#include "oadp/classify.hpp"
#include "oadp/tensor.hpp"

namespace oadp {

// Label value for the background class in rcnn_cls_loss.
inline constexpr int kBackground = -1;

struct PyramidWeights {
  double object = 0.5;
  double block = 0.25;
  double global = 0.25;
  void validate() const;
};

struct LossParts {
  double rcnn = 0.0;
  double object = 0.0;
  double block = 0.0;
  double global = 0.0;
};

double loss_object(const Tensor& student, const Tensor& teacher,
                   Reduction reduction = Reduction::kMean);
double loss_block(const Tensor& student, const Tensor& teacher,
                  Reduction reduction = Reduction::kMean);
double loss_global(std::span<const double> student,
                   std::span<const double> teacher,
                   Reduction reduction = Reduction::kMean);

// Softmax over base categories and bg (bg last); novel categories are absent.
Vec base_probs_with_bg(std::span<const double> e, const CategoryTable& table,
                       double temperature = 1.0);

// -sum_p log P_base(p, y_p). Labels are table indices of base categories or
// kBackground.
double rcnn_cls_loss(const Tensor& embeddings, std::span<const int> labels,
                     const CategoryTable& table, double temperature = 1.0);

// L + wO * LO + wB * LB + wG * LG.
double total_loss(const LossParts& parts, const PyramidWeights& weights);

struct StudentConfig {
  std::size_t embed_dim = 32;
  std::size_t channels = 8;
  std::size_t roi_size = 2;
  std::size_t samples_per_bin = 2;
};

struct StudentOutputs {
  Tensor object;  // |proposals| x d
  Tensor block;   // |blocks| x d
  Vec global;     // d
  Tensor rcnn;    // |proposals| x d, R-CNN head embeddings
};

// Minimal deterministic detector stand-in: a strided average-pooling pyramid
// F_2..F_6 lifted to `channels` by per-level linear maps, RoI Align on F_2,
// and affine heads for objects, blocks, R-CNN and the global branch.
class StudentStub {
 public:
  StudentStub(const StudentConfig& cfg, std::uint64_t seed);

  const StudentConfig& config() const { return cfg_; }

  // Levels 2..6 in order; level k has stride 2^k.
  std::vector<Tensor> features(const Tensor& image) const;

  StudentOutputs forward(const Tensor& image, std::span<const Box> proposals,
                         std::span<const Box> blocks) const;

  const Vec& object_bias() const { return object_bias_; }
  const Vec& block_bias() const { return block_bias_; }
  const Vec& global_bias() const { return global_bias_; }
  const Vec& rcnn_bias() const { return rcnn_bias_; }

 private:
  Tensor pooled_rois(const Tensor& finest, std::span<const Box> boxes) const;

  StudentConfig cfg_;
  std::vector<Tensor> lifts_;  // 3 x C per level
  Tensor object_head_, block_head_, rcnn_head_, global_head_;
  Vec object_bias_, block_bias_, rcnn_bias_, global_bias_;
};

// Everything the losses read, gathered for one image.
struct LossInputs {
  Tensor object_student, object_teacher;
  Tensor block_student, block_teacher;
  Vec global_student, global_teacher;
  Tensor rcnn_embeddings;  // may be empty when no classification term
  std::vector<int> labels;
  const CategoryTable* table = nullptr;
  double temperature = 1.0;
  Reduction reduction = Reduction::kMean;
};

LossParts evaluate_losses(const LossInputs& in);

struct L1Gradient {
  Tensor grad;       // d loss / d student, same shape as the student input
  bool tie = false;  // some coordinate difference was exactly 0
};

// sign(student - teacher) / count per coordinate (no division for kSum);
// tied coordinates get subgradient 0 and set the flag.
L1Gradient l1_gradient(const Tensor& student, const Tensor& teacher,
                       Reduction reduction = Reduction::kMean);

// d rcnn_cls_loss / d embeddings, through the cosine-logit Jacobian.
Tensor rcnn_cls_gradient(const Tensor& embeddings, std::span<const int> labels,
                         const CategoryTable& table, double temperature = 1.0);

struct LossGradients {
  L1Gradient object, block, global;
  Tensor rcnn;
};

LossGradients loss_gradients(const LossInputs& in);

// Central differences of f at x, step h per coordinate.
Tensor numeric_gradient(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h = 1e-5);

// max|a - b| / max(max|a|, max|b|); 0 when both are zero.
double relative_error(const Tensor& a, const Tensor& b);

// Analytic gradients of each loss term against central differences with
// respect to the student inputs. L1 coordinates within 2h of a tie are left
// out of the comparison and counted in `near_ties`.
struct GradientCheck {
  double object = 0.0;
  double block = 0.0;
  double global = 0.0;
  double rcnn = 0.0;
  std::size_t near_ties = 0;
  double max() const;
};
GradientCheck check_gradients(const LossInputs& in, double h = 1e-5);

}  // namespace oadp
