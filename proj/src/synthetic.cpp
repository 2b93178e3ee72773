#include "oadp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oadp/random.hpp"

namespace oadp {

namespace {

Tensor uniform_tensor(Rng& rng, Shape shape, std::size_t fan_in) {
  const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-a, a);
  return t;
}

Vec uniform_vec(Rng& rng, std::size_t n, std::size_t fan_in) {
  return uniform_tensor(rng, {n}, fan_in).values();
}

struct Pattern {
  double primary[3];
  double secondary[3];
  bool vertical;
  int stripes;
};

Pattern category_pattern(std::size_t category) {
  Rng rng(0x5eed0000ULL + 7919ULL * category);
  Pattern p{};
  for (double& v : p.primary) v = rng.uniform(0.0, 1.0);
  for (double& v : p.secondary) v = rng.uniform(0.0, 1.0);
  p.vertical = category % 2 == 0;
  p.stripes = 2 + static_cast<int>(category % 3);
  return p;
}

Box clamp_box(double x1, double y1, double x2, double y2, const ImageSize& s) {
  const double w = static_cast<double>(s.width), h = static_cast<double>(s.height);
  x1 = std::clamp(x1, 0.0, w);
  x2 = std::clamp(x2, 0.0, w);
  y1 = std::clamp(y1, 0.0, h);
  y2 = std::clamp(y2, 0.0, h);
  return Box(x1, y1, x2, y2);
}

}  // namespace

EncoderWeights gen_weights(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t dx = cfg.width, hidden = 4 * dx;
  EncoderWeights w;
  w.config = cfg;
  w.patch_proj = uniform_tensor(rng, {cfg.patch_dim(), dx}, cfg.patch_dim());
  w.patch_bias = uniform_vec(rng, dx, cfg.patch_dim());
  w.positions = uniform_tensor(rng, {cfg.token_count(), dx}, dx);
  w.cls_seed = uniform_vec(rng, dx, dx);
  w.ln_pre_gain.assign(dx, 1.0);
  w.ln_pre_bias.assign(dx, 0.0);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    BlockWeights b;
    b.ln1_gain.assign(dx, 1.0);
    b.ln1_bias.assign(dx, 0.0);
    b.w_q = uniform_tensor(rng, {dx, dx}, dx);
    b.b_q = uniform_vec(rng, dx, dx);
    b.w_k = uniform_tensor(rng, {dx, dx}, dx);
    b.b_k = uniform_vec(rng, dx, dx);
    b.w_v = uniform_tensor(rng, {dx, dx}, dx);
    b.b_v = uniform_vec(rng, dx, dx);
    b.w_o = uniform_tensor(rng, {dx, dx}, dx);
    b.b_o = uniform_vec(rng, dx, dx);
    b.ln2_gain.assign(dx, 1.0);
    b.ln2_bias.assign(dx, 0.0);
    b.w_fc1 = uniform_tensor(rng, {dx, hidden}, dx);
    b.b_fc1 = uniform_vec(rng, hidden, dx);
    b.w_fc2 = uniform_tensor(rng, {hidden, dx}, hidden);
    b.b_fc2 = uniform_vec(rng, dx, hidden);
    w.blocks.push_back(std::move(b));
  }
  w.ln_post_gain.assign(dx, 1.0);
  w.ln_post_bias.assign(dx, 0.0);
  w.out_proj = uniform_tensor(rng, {dx, cfg.embed_dim}, dx);
  return w;
}

CategoryTable gen_category_table(std::size_t n_base, std::size_t n_novel,
                                 std::size_t dim, std::uint64_t seed) {
  const std::size_t n = n_base + n_novel + 1;
  check(n_base >= 1, ErrorKind::kInvalidArgument, "need at least one base category");
  check(n <= dim, ErrorKind::kInvalidArgument,
        "cannot place " + std::to_string(n) + " orthogonal embeddings in dimension " +
            std::to_string(dim));
  Rng rng(seed);
  std::vector<Vec> basis;
  while (basis.size() < n) {
    Vec v(dim);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    // Two passes of modified Gram-Schmidt keep the set orthogonal to ~1e-15.
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vec& b : basis) {
        double dot = 0.0;
        for (std::size_t i = 0; i < dim; ++i) dot += v[i] * b[i];
        for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * b[i];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  std::vector<Category> cats;
  for (std::size_t i = 0; i < n_base; ++i) {
    cats.push_back({"base" + std::to_string(i), basis[i], Split::kBase});
  }
  for (std::size_t i = 0; i < n_novel; ++i) {
    cats.push_back({"novel" + std::to_string(i), basis[n_base + i], Split::kNovel});
  }
  return CategoryTable(std::move(cats), basis.back());
}

void paint_category(Tensor& image, const Box& box, std::size_t category) {
  const Pattern p = category_pattern(category);
  const std::size_t h = image.dim(0), w = image.dim(1);
  for (std::size_t y = 0; y < h; ++y) {
    const double cy = static_cast<double>(y) + 0.5;
    if (cy < box.y1() || cy >= box.y2()) continue;
    for (std::size_t x = 0; x < w; ++x) {
      const double cx = static_cast<double>(x) + 0.5;
      if (cx < box.x1() || cx >= box.x2()) continue;
      const double u = p.vertical ? (cx - box.x1()) / box.width()
                                  : (cy - box.y1()) / box.height();
      const bool first = static_cast<int>(std::floor(u * 2 * p.stripes)) % 2 == 0;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        image(y, x, ch) = first ? p.primary[ch] : p.secondary[ch];
      }
    }
  }
}

Scene gen_scene(const SceneSpec& spec) {
  const double w = static_cast<double>(spec.size.width);
  const double h = static_cast<double>(spec.size.height);
  const auto inside = [&](const Box& b) {
    return b.x1() >= 0.0 && b.y1() >= 0.0 && b.x2() <= w && b.y2() <= h;
  };
  for (const auto& o : spec.objects) {
    check(inside(o.box), ErrorKind::kInvalidArgument, "planted object outside the image");
  }
  check(spec.jitter >= 0.0 && spec.jitter < 0.25, ErrorKind::kInvalidArgument,
        "jitter must lie in [0, 0.25)");

  Rng rng(spec.seed);
  Scene scene;
  scene.image = Tensor({spec.size.height, spec.size.width, 3});
  for (double& v : scene.image.data()) v = 0.5 + rng.uniform(-0.05, 0.05);
  for (const auto& d : spec.distractors) paint_category(scene.image, d.box, d.category);
  for (const auto& o : spec.objects) paint_category(scene.image, o.box, o.category);

  for (const auto& o : spec.objects) {
    const double jx = spec.jitter * o.box.width(), jy = spec.jitter * o.box.height();
    const double x1 = o.box.x1() + rng.uniform(-jx, jx);
    const double y1 = o.box.y1() + rng.uniform(-jy, jy);
    const double x2 = o.box.x2() + rng.uniform(-jx, jx);
    const double y2 = o.box.y2() + rng.uniform(-jy, jy);
    const Box p = clamp_box(x1, y1, x2, y2, spec.size);
    scene.proposals.emplace_back(p, std::clamp(iou(p, o.box), 0.0, 1.0));
    scene.truths.push_back({o.box, o.category});
  }
  return scene;
}

SceneSpec random_distractor_scene(std::uint64_t seed,
                                  const DistractorSceneOptions& opts) {
  check(opts.categories >= 2, ErrorKind::kInvalidArgument,
        "distractor scenes need at least two categories");
  check(opts.min_side >= 4.0 && opts.max_side >= opts.min_side,
        ErrorKind::kInvalidArgument, "invalid object side range");
  Rng rng(seed);
  SceneSpec spec;
  spec.size = opts.size;
  spec.seed = rng.next();
  const double w = static_cast<double>(opts.size.width);
  const double h = static_cast<double>(opts.size.height);

  std::vector<Box> occupied;
  const auto free = [&](const Box& b) {
    return std::none_of(occupied.begin(), occupied.end(),
                        [&](const Box& o) { return intersection_area(o, b) > 0.0; });
  };
  for (std::size_t n = 0; n < opts.objects; ++n) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double aspect = std::exp(rng.uniform(-1.0, 1.0) * std::log(opts.max_aspect));
      const double side = rng.uniform(opts.min_side, opts.max_side);
      const double bw = std::round(side * std::sqrt(aspect));
      const double bh = std::round(side / std::sqrt(aspect));
      if (bw + 2 >= w || bh + 2 >= h) continue;
      const double x1 = std::round(rng.uniform(1.0, w - bw - 1.0));
      const double y1 = std::round(rng.uniform(1.0, h - bh - 1.0));
      const Box obj(x1, y1, x1 + bw, y1 + bh);
      const std::size_t cat = rng.below(opts.categories);

      std::vector<PlantedRect> distractors;
      for (std::size_t k = 0; k < opts.distractors_per_object; ++k) {
        const std::size_t side_id = rng.below(4);
        const double depth = std::round(rng.uniform(opts.min_side, opts.max_side));
        std::size_t dcat = rng.below(opts.categories - 1);
        if (dcat >= cat) ++dcat;
        double dx1, dy1, dx2, dy2;
        switch (side_id) {
          case 0: dx1 = x1 - depth; dx2 = x1; dy1 = y1; dy2 = y1 + bh; break;
          case 1: dx1 = x1 + bw; dx2 = x1 + bw + depth; dy1 = y1; dy2 = y1 + bh; break;
          case 2: dy1 = y1 - depth; dy2 = y1; dx1 = x1; dx2 = x1 + bw; break;
          default: dy1 = y1 + bh; dy2 = y1 + bh + depth; dx1 = x1; dx2 = x1 + bw; break;
        }
        dx1 = std::max(dx1, 0.0);
        dy1 = std::max(dy1, 0.0);
        dx2 = std::min(dx2, w);
        dy2 = std::min(dy2, h);
        if (dx2 - dx1 < 2.0 || dy2 - dy1 < 2.0) continue;
        distractors.push_back({Box(dx1, dy1, dx2, dy2), dcat});
      }
      bool ok = free(obj);
      for (const auto& d : distractors) ok = ok && free(d.box);
      if (!ok) continue;
      occupied.push_back(obj);
      for (const auto& d : distractors) {
        occupied.push_back(d.box);
        spec.distractors.push_back(d);
      }
      spec.objects.push_back({obj, cat});
      break;
    }
  }
  return spec;
}

}  // namespace oadp
