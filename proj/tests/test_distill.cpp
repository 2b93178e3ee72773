#include <doctest.h>

#include <cmath>

#include "oadp/distill.hpp"
#include "oadp/geometry.hpp"
#include "support.hpp"

using namespace oadp;
using testing::max_abs_diff;
using testing::random_tensor;

namespace {

CategoryTable mixed_table(Rng& rng, std::size_t d) {
  return CategoryTable({{"b0", testing::random_vec(rng, d), Split::kBase},
                        {"b1", testing::random_vec(rng, d), Split::kBase},
                        {"n0", testing::random_vec(rng, d), Split::kNovel},
                        {"b2", testing::random_vec(rng, d), Split::kBase}},
                       testing::random_vec(rng, d));
}

}  // namespace

TEST_CASE("l1 losses") {
  Rng rng(1);
  const Tensor a = random_tensor(rng, {3, 6});
  CHECK(loss_object(a, a) == 0.0);
  CHECK(loss_block(a, a) == 0.0);
  CHECK(loss_object(Tensor({1, 4}), Tensor({1, 4}, 1.0)) == 1.0);
  CHECK(loss_global(Vec{0, 0}, Vec{2, 0}) == 1.0);

  const Tensor s = random_tensor(rng, {4, 5}), t = random_tensor(rng, {4, 5});
  double ref = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) ref += std::abs(s[i] - t[i]);
  CHECK(std::abs(loss_object(s, t) - ref / 20) < 1e-12);
  CHECK(std::abs(loss_block(s, t) - ref / 20) < 1e-12);
  CHECK(std::abs(loss_object(s, t, Reduction::kSum) - ref) < 1e-12);
  const Vec g1 = testing::random_vec(rng, 7), g2 = testing::random_vec(rng, 7);
  double gref = 0.0;
  for (std::size_t i = 0; i < 7; ++i) gref += std::abs(g1[i] - g2[i]);
  CHECK(std::abs(loss_global(g1, g2) - gref / 7) < 1e-12);
  CHECK_THROWS_AS(loss_object(s, random_tensor(rng, {3, 5})), Error);
}

TEST_CASE("rcnn_cls_loss") {
  const CategoryTable one({{"a", {1, 0}, Split::kBase}}, {0, 1});
  const Tensor e({1, 2}, {1, 1});  // equal cosine to both
  const std::vector<int> bg{kBackground};
  CHECK(std::abs(rcnn_cls_loss(e, bg, one) - 0.69314718055994530942) < 1e-15);

  const Tensor e2({2, 2}, {1, 1, 1, 1});
  const std::vector<int> bg2{kBackground, kBackground};
  CHECK(rcnn_cls_loss(e2, bg2, one) == doctest::Approx(2 * rcnn_cls_loss(e, bg, one)).epsilon(1e-15));

  // Growing the margin towards the label lowers the loss.
  const std::vector<int> label{0};
  double last = 1e9;
  for (double angle = 1.4; angle >= 0.0; angle -= 0.1) {
    const double l = rcnn_cls_loss(Tensor({1, 2}, {std::cos(angle), std::sin(angle)}), label, one);
    CHECK(l < last);
    last = l;
  }

  Rng rng(2);
  const CategoryTable t = mixed_table(rng, 6);
  const std::vector<int> novel{2};
  try {
    rcnn_cls_loss(random_tensor(rng, {1, 6}), novel, t);
    FAIL("expected a novel-label error");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::kInvalidArgument);
  }

  const Vec p = base_probs_with_bg(testing::random_vec(rng, 6), t);
  CHECK(p.size() == 4);
  double total = 0.0;
  for (double v : p) total += v;
  CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("total_loss") {
  const PyramidWeights w;
  CHECK(total_loss({}, w) == 0.0);
  CHECK(total_loss({1, 1, 1, 1}, w) == 2.0);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const LossParts p{rng.unit(), rng.unit(), rng.unit(), rng.unit()};
    const PyramidWeights q{rng.unit(), rng.unit(), rng.unit()};
    CHECK(std::abs(total_loss(p, q) -
                   (p.rcnn + q.object * p.object + q.block * p.block + q.global * p.global)) < 1e-15);
  }
  CHECK_THROWS_AS((PyramidWeights{-0.1, 0.25, 0.25}.validate()), Error);
}

TEST_CASE("student stub") {
  const StudentConfig cfg;
  const StudentStub a(cfg, 5), b(cfg, 5);
  Rng rng(4);
  const Tensor image = random_tensor(rng, {64, 96, 3}, 0.0, 1.0);
  const std::vector<Box> props{Box(3, 4, 30, 40), Box(50.5, 10, 90, 60)};
  const auto blocks = partition_blocks(ImageSize(96, 64), 32);
  const StudentOutputs x = a.forward(image, props, blocks);
  const StudentOutputs y = b.forward(image, props, blocks);
  CHECK(x.object == y.object);
  CHECK(x.block == y.block);
  CHECK(x.global == y.global);
  CHECK(x.rcnn == y.rcnn);
  CHECK(x.object.shape() == Shape{2, cfg.embed_dim});
  CHECK(x.rcnn.shape() == Shape{2, cfg.embed_dim});
  CHECK(x.block.shape() == Shape{6, cfg.embed_dim});
  CHECK(x.global.size() == cfg.embed_dim);

  const auto levels = a.features(image);
  REQUIRE(levels.size() == 5);
  CHECK(levels[0].dim(0) == 16);
  CHECK(levels[0].dim(1) == 24);
  CHECK(levels[4].dim(0) == 1);
  CHECK(levels[4].dim(1) == 2);

  const StudentOutputs z = a.forward(Tensor({64, 96, 3}), props, blocks);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(Vec(z.object.row(i).begin(), z.object.row(i).end()) == a.object_bias());
    CHECK(Vec(z.rcnn.row(i).begin(), z.rcnn.row(i).end()) == a.rcnn_bias());
  }
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(Vec(z.block.row(i).begin(), z.block.row(i).end()) == a.block_bias());
  }
  CHECK(z.global == a.global_bias());

  CHECK_FALSE(StudentStub(cfg, 6).forward(image, props, blocks).object == x.object);
}

TEST_CASE("l1 gradient sign rule and ties") {
  const Tensor s({1, 3}, {2, 3, 4}), t({1, 3}, {1, 1, 1});
  const L1Gradient g = l1_gradient(s, t);
  CHECK_FALSE(g.tie);
  for (double v : g.grad.data()) CHECK(v == 1.0 / 3.0);

  const L1Gradient tie = l1_gradient(s, s);
  CHECK(tie.tie);
  for (double v : tie.grad.data()) CHECK(v == 0.0);

  CHECK(l1_gradient(t, s, Reduction::kSum).grad == Tensor({1, 3}, -1.0));
}

TEST_CASE("gradients agree with central differences") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 3 + rng.below(6), n = 1 + rng.below(4);
    const CategoryTable table = mixed_table(rng, d);
    LossInputs in;
    in.object_student = random_tensor(rng, {n, d});
    in.object_teacher = random_tensor(rng, {n, d});
    in.block_student = random_tensor(rng, {2, d});
    in.block_teacher = random_tensor(rng, {2, d});
    in.global_student = testing::random_vec(rng, d);
    in.global_teacher = testing::random_vec(rng, d);
    in.rcnn_embeddings = random_tensor(rng, {n, d});
    for (std::size_t i = 0; i < n; ++i) {
      const int pick = static_cast<int>(rng.below(4));
      in.labels.push_back(pick == 2 ? kBackground : pick);
    }
    in.table = &table;

    // Independent finite differences of each loss term.
    const double h = 1e-5;
    const LossGradients g = loss_gradients(in);
    const auto fd = [&](const Tensor& x, auto&& f) {
      Tensor out(x.shape());
      Tensor probe = x;
      for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        out[i] = (up - down) / (2 * h);
      }
      return out;
    };
    const auto rel = [](const Tensor& a, const Tensor& b) {
      double diff = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
      }
      return diff / scale;
    };
    CHECK(rel(g.object.grad, fd(in.object_student, [&](const Tensor& s) {
            return loss_object(s, in.object_teacher);
          })) < 1e-4);
    CHECK(rel(g.block.grad, fd(in.block_student, [&](const Tensor& s) {
            return loss_block(s, in.block_teacher);
          })) < 1e-4);
    CHECK(rel(g.global.grad, fd(Tensor({1, d}, in.global_student), [&](const Tensor& s) {
            return loss_global(s.values(), in.global_teacher);
          })) < 1e-4);
    CHECK(rel(g.rcnn, fd(in.rcnn_embeddings, [&](const Tensor& e) {
            return rcnn_cls_loss(e, in.labels, table);
          })) < 1e-4);

    const GradientCheck c = check_gradients(in);
    CHECK(c.max() < 1e-4);
  }
}

TEST_CASE("evaluate_losses") {
  Rng rng(9);
  const CategoryTable table = mixed_table(rng, 4);
  LossInputs in;
  in.object_student = in.object_teacher = random_tensor(rng, {2, 4});
  in.block_student = in.block_teacher = random_tensor(rng, {3, 4});
  in.global_student = in.global_teacher = testing::random_vec(rng, 4);
  const LossParts zero = evaluate_losses(in);
  CHECK(zero.object == 0.0);
  CHECK(zero.block == 0.0);
  CHECK(zero.global == 0.0);
  CHECK(zero.rcnn == 0.0);

  in.rcnn_embeddings = random_tensor(rng, {2, 4});
  in.labels = {0, kBackground};
  in.table = &table;
  CHECK(evaluate_losses(in).rcnn == rcnn_cls_loss(in.rcnn_embeddings, in.labels, table));
  CHECK(evaluate_losses(in).rcnn > 0.0);
}
