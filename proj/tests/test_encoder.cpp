#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oadp/encoder.hpp"
#include "oadp/synthetic.hpp"
#include "support.hpp"

using namespace oadp;
using testing::max_abs_diff;
using testing::random_tensor;

namespace {

using Rows = std::vector<Vec>;

Rows norm_rows(const Rows& x, const Vec& g, const Vec& b) {
  Rows out = x;
  for (auto& r : out) {
    double mean = 0.0, var = 0.0;
    for (double v : r) mean += v;
    mean /= r.size();
    for (double v : r) var += (v - mean) * (v - mean);
    var /= r.size();
    for (std::size_t c = 0; c < r.size(); ++c) {
      r[c] = (r[c] - mean) / std::sqrt(var + 1e-5) * g[c] + b[c];
    }
  }
  return out;
}

Rows affine(const Rows& x, const Tensor& w, const Vec& b) {
  Rows out;
  for (const auto& r : x) {
    Vec o(w.dim(1), 0.0);
    for (std::size_t j = 0; j < w.dim(1); ++j) {
      for (std::size_t k = 0; k < r.size(); ++k) o[j] += r[k] * w(k, j);
      if (!b.empty()) o[j] += b[j];
    }
    out.push_back(o);
  }
  return out;
}

Rows attention(const Rows& x, const BlockWeights& b, std::size_t heads,
               const std::vector<std::vector<bool>>& allow) {
  const Rows q = affine(x, b.w_q, b.b_q), k = affine(x, b.w_k, b.b_k), v = affine(x, b.w_v, b.b_v);
  const std::size_t n = x.size(), width = x[0].size(), hd = width / heads;
  Rows mixed(n, Vec(width, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double peak = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < hd; ++c) acc += q[i][h * hd + c] * k[j][h * hd + c];
        s[j] = acc / std::sqrt(static_cast<double>(hd));
        if (allow[i][j]) peak = std::max(peak, s[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) z += allow[i][j] ? std::exp(s[j] - peak) : 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!allow[i][j]) continue;
        const double p = std::exp(s[j] - peak) / z;
        for (std::size_t c = 0; c < hd; ++c) mixed[i][h * hd + c] += p * v[j][h * hd + c];
      }
    }
  }
  return affine(mixed, b.w_o, b.b_o);
}

// Loop-level reference for the whole encoder on a token list.
Rows reference_blocks(Rows x, const EncoderWeights& w,
                      const std::vector<std::vector<bool>>& allow) {
  const bool plain = w.config.attention_only;
  if (!plain) x = norm_rows(x, w.ln_pre_gain, w.ln_pre_bias);
  for (const auto& b : w.blocks) {
    const Rows a = attention(plain ? x : norm_rows(x, b.ln1_gain, b.ln1_bias), b,
                             w.config.heads, allow);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t c = 0; c < x[i].size(); ++c) x[i][c] += a[i][c];
    }
    if (plain) continue;
    Rows h = affine(norm_rows(x, b.ln2_gain, b.ln2_bias), b.w_fc1, b.b_fc1);
    for (auto& r : h) {
      for (double& v : r) v = v / (1.0 + std::exp(-1.702 * v));
    }
    const Rows m = affine(h, b.w_fc2, b.b_fc2);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t c = 0; c < x[i].size(); ++c) x[i][c] += m[i][c];
    }
  }
  return x;
}

Vec reference_project(const Vec& row, const EncoderWeights& w) {
  return affine(norm_rows({row}, w.ln_post_gain, w.ln_post_bias), w.out_proj, {})[0];
}

Rows reference_tokens(const Tensor& crop, const EncoderWeights& w) {
  const auto& c = w.config;
  Rows flat;
  for (std::size_t gy = 0; gy < c.grid(); ++gy) {
    for (std::size_t gx = 0; gx < c.grid(); ++gx) {
      Vec r;
      for (std::size_t py = 0; py < c.patch; ++py) {
        for (std::size_t px = 0; px < c.patch; ++px) {
          for (std::size_t ch = 0; ch < 3; ++ch) r.push_back(crop(gy * c.patch + py, gx * c.patch + px, ch));
        }
      }
      flat.push_back(r);
    }
  }
  Rows tokens = affine(flat, w.patch_proj, w.patch_bias);
  tokens.push_back(w.cls_seed);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t k = 0; k < c.width; ++k) tokens[i][k] += w.positions(i, k);
  }
  return tokens;
}

Tensor random_crop(Rng& rng, const EncoderConfig& c) {
  return random_tensor(rng, {c.resolution, c.resolution, 3}, 0.0, 1.0);
}

}  // namespace

TEST_CASE("tokenize") {
  EncoderConfig cfg;
  EncoderWeights w = gen_weights(cfg, 1);
  w.positions = Tensor(w.positions.shape());
  const Tensor x = tokenize(Tensor({32, 32, 3}), w);
  CHECK(x.dim(0) == 17);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(Vec(x.row(i).begin(), x.row(i).end()) == w.patch_bias);
  }
  CHECK(Vec(x.row(16).begin(), x.row(16).end()) == w.cls_seed);

  EncoderConfig single;
  single.resolution = single.patch = 8;
  CHECK(single.token_count() == 2);
  CHECK(tokenize(Tensor({8, 8, 3}), gen_weights(single, 2)).dim(0) == 2);

  EncoderConfig small;
  small.resolution = 8;
  small.patch = 4;
  const EncoderWeights ws = gen_weights(small, 3);
  Rng rng(4);
  const Tensor crop = random_crop(rng, small);
  const Tensor t = tokenize(crop, ws);
  REQUIRE(t.dim(0) == 5);
  const Rows ref = reference_tokens(crop, ws);
  CHECK(max_abs_diff(t.row(2), ref[2]) < 1e-10);

  CHECK_THROWS_AS(tokenize(Tensor({16, 16, 3}), w), Error);
}

TEST_CASE("encode_cls matches the loop reference") {
  Rng rng(10);
  for (bool plain : {false, true}) {
    EncoderConfig cfg;
    cfg.attention_only = plain;
    const EncoderWeights w = gen_weights(cfg, 20 + plain);
    const Tensor crop = random_crop(rng, cfg);
    const std::size_t n = cfg.token_count();
    const Rows out = reference_blocks(reference_tokens(crop, w), w,
                                      std::vector<std::vector<bool>>(n, std::vector<bool>(n, true)));
    CHECK(max_abs_diff(encode_cls(crop, w), reference_project(out.back(), w)) < 1e-9);
  }
}

TEST_CASE("residual-only network returns the projected [CLS] input") {
  EncoderConfig cfg;
  EncoderWeights w = gen_weights(cfg, 5);
  for (auto& b : w.blocks) {
    b.w_v = Tensor(b.w_v.shape());
    b.w_o = Tensor(b.w_o.shape());
    std::fill(b.b_v.begin(), b.b_v.end(), 0.0);
    std::fill(b.b_o.begin(), b.b_o.end(), 0.0);
    b.w_fc1 = Tensor(b.w_fc1.shape());
    b.w_fc2 = Tensor(b.w_fc2.shape());
    std::fill(b.b_fc1.begin(), b.b_fc1.end(), 0.0);
    std::fill(b.b_fc2.begin(), b.b_fc2.end(), 0.0);
  }
  Rng rng(6);
  const Tensor crop = random_crop(rng, cfg);
  Vec cls = w.cls_seed;
  for (std::size_t c = 0; c < cls.size(); ++c) cls[c] += w.positions(16, c);
  const Vec want = reference_project(norm_rows({cls}, w.ln_pre_gain, w.ln_pre_bias)[0], w);
  CHECK(max_abs_diff(encode_cls(crop, w), want) < 1e-12);

  w.config.attention_only = true;
  CHECK(max_abs_diff(encode_cls(crop, w), reference_project(cls, w)) < 1e-12);
}

TEST_CASE("encode_cls is position sensitive") {
  EncoderConfig cfg;
  const EncoderWeights w = gen_weights(cfg, 8);
  Rng rng(9);
  const Tensor crop = random_crop(rng, cfg);
  Tensor swapped = crop;
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 0; x < 8; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        std::swap(swapped(y, x, c), swapped(y + 24, x + 24, c));
      }
    }
  }
  CHECK(max_abs_diff(encode_cls(crop, w), encode_cls(swapped, w)) > 1e-6);
}

TEST_CASE("single-layer scalar forward") {
  EncoderConfig cfg;
  cfg.resolution = cfg.patch = 1;
  cfg.width = 2;
  cfg.heads = 1;
  cfg.layers = 1;
  cfg.embed_dim = 2;
  cfg.attention_only = true;
  EncoderWeights w = gen_weights(cfg, 0);
  w.patch_proj = Tensor({3, 2}, {1.0, 0.0, 0.0, 2.0, 0.5, -1.0});
  w.patch_bias = {0.1, -0.1};
  w.positions = Tensor({2, 2}, {0.05, 0.0, 0.0, 0.05});
  w.cls_seed = {0.3, -0.2};
  auto& b = w.blocks[0];
  b.w_q = Tensor({2, 2}, {1.0, 0.5, -0.5, 1.0});
  b.w_k = Tensor({2, 2}, {0.8, 0.0, 0.3, -1.2});
  b.w_v = Tensor({2, 2}, {0.4, 0.1, -0.2, 0.9});
  b.w_o = Tensor({2, 2}, {1.1, -0.3, 0.2, 0.7});
  b.b_q = {0.0, 0.1};
  b.b_k = {-0.1, 0.0};
  b.b_v = {0.05, 0.02};
  b.b_o = {0.0, -0.03};
  w.out_proj = Tensor({2, 2}, {1.0, 2.0, -1.0, 0.5});
  const Tensor crop({1, 1, 3}, {0.2, 0.4, 0.6});

  // Tokens.
  const double p0 = 0.2 * 1.0 + 0.4 * 0.0 + 0.6 * 0.5 + 0.1 + 0.05;
  const double p1 = 0.2 * 0.0 + 0.4 * 2.0 + 0.6 * -1.0 - 0.1 + 0.0;
  const double c0 = 0.3 + 0.0, c1 = -0.2 + 0.05;
  const double tok[2][2] = {{p0, p1}, {c0, c1}};
  double q[2][2], k[2][2], v[2][2];
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      q[i][j] = tok[i][0] * b.w_q(0, j) + tok[i][1] * b.w_q(1, j) + b.b_q[j];
      k[i][j] = tok[i][0] * b.w_k(0, j) + tok[i][1] * b.w_k(1, j) + b.b_k[j];
      v[i][j] = tok[i][0] * b.w_v(0, j) + tok[i][1] * b.w_v(1, j) + b.b_v[j];
    }
  }
  // [CLS] row attends to both tokens.
  const double s0 = (q[1][0] * k[0][0] + q[1][1] * k[0][1]) / std::sqrt(2.0);
  const double s1 = (q[1][0] * k[1][0] + q[1][1] * k[1][1]) / std::sqrt(2.0);
  const double a0 = 1.0 / (1.0 + std::exp(s1 - s0)), a1 = 1.0 - a0;
  const double m0 = a0 * v[0][0] + a1 * v[1][0], m1 = a0 * v[0][1] + a1 * v[1][1];
  const double o0 = c0 + m0 * b.w_o(0, 0) + m1 * b.w_o(1, 0) + b.b_o[0];
  const double o1 = c1 + m0 * b.w_o(0, 1) + m1 * b.w_o(1, 1) + b.b_o[1];
  // Two-element layer norm: (x - mean) / sqrt(var + eps).
  const double mean = 0.5 * (o0 + o1), var = 0.25 * (o0 - o1) * (o0 - o1);
  const double n0 = (o0 - mean) / std::sqrt(var + 1e-5), n1 = (o1 - mean) / std::sqrt(var + 1e-5);
  const Vec want = {n0 * 1.0 + n1 * -1.0, n0 * 2.0 + n1 * 0.5};
  CHECK(max_abs_diff(encode_cls(crop, w), want) < 1e-9);
}

TEST_CASE("[OBJ] does not change the other tokens") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    EncoderConfig cfg;
    const EncoderWeights w = gen_weights(cfg, 100 + trial);
    const Tensor crop = random_crop(rng, cfg);
    BinaryMask m(1, cfg.token_count());
    for (std::size_t i = 0; i + 1 < cfg.token_count(); ++i) m.set(0, i, rng.unit() < 0.4);
    m.set(0, rng.below(cfg.token_count() - 1), true);
    const Tensor with_obj = encode_obj_tokens(crop, w, m);
    const Tensor plain = encode_cls_tokens(crop, w);
    for (std::size_t i = 0; i < cfg.token_count(); ++i) {
      CHECK(max_abs_diff(with_obj.row(i), plain.row(i)) < 1e-9);
    }
  }
}

TEST_CASE("encode_obj matches the loop reference with the augmented mask") {
  Rng rng(43);
  EncoderConfig cfg;
  const EncoderWeights w = gen_weights(cfg, 44);
  const Tensor crop = random_crop(rng, cfg);
  const std::size_t n = cfg.token_count();
  BinaryMask m(1, n);
  for (std::size_t i : {0u, 5u, 6u, 9u}) m.set(0, i, true);
  Rows tokens = reference_tokens(crop, w);
  tokens.push_back(tokens.back());
  std::vector<std::vector<bool>> allow(n + 1, std::vector<bool>(n + 1, true));
  for (std::size_t i = 0; i < n; ++i) allow[i][n] = false;
  for (std::size_t j = 0; j < n; ++j) allow[n][j] = m(0, j);
  const Rows out = reference_blocks(tokens, w, allow);
  CHECK(max_abs_diff(encode_obj(crop, w, m), reference_project(out.back(), w)) < 1e-9);
}

TEST_CASE("single-layer [OBJ] sees only masked patches") {
  Rng rng(50);
  EncoderConfig cfg;
  cfg.layers = 1;
  const EncoderWeights w = gen_weights(cfg, 51);
  const std::size_t g = cfg.grid(), p = cfg.patch;
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor crop = random_crop(rng, cfg);
    BinaryMask m(1, cfg.token_count());
    for (std::size_t i = 0; i < g * g; ++i) m.set(0, i, i % 3 == static_cast<std::size_t>(trial % 3));
    const Vec base = encode_obj(crop, w, m);
    for (std::size_t cell = 0; cell < g * g; ++cell) {
      Tensor changed = crop;
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x < p; ++x) {
          for (std::size_t c = 0; c < 3; ++c) {
            changed((cell / g) * p + y, (cell % g) * p + x, c) += rng.uniform(-0.5, 0.5);
          }
        }
      }
      const double diff = max_abs_diff(encode_obj(changed, w, m), base);
      if (m(0, cell)) {
        CHECK(diff > 1e-6);
      } else {
        CHECK(diff < 1e-12);
      }
    }
  }
}

TEST_CASE("[OBJ] over identical tokens ignores how many patches are allowed") {
  // [OBJ] also attends to itself, so the symmetry needs its row to equal
  // the patch rows: uniform crop, no positional signal, [CLS] seed equal to
  // the patch token.
  EncoderConfig cfg;
  EncoderWeights w = gen_weights(cfg, 60);
  w.positions = Tensor(w.positions.shape());
  Rng rng(61);
  const Tensor crop({32, 32, 3}, rng.uniform(0.0, 1.0));
  const Tensor tokens = tokenize(crop, w);
  w.cls_seed.assign(tokens.row(0).begin(), tokens.row(0).end());
  BinaryMask all(1, 17), one(1, 17);
  for (std::size_t i = 0; i < 16; ++i) all.set(0, i, true);
  one.set(0, 7, true);
  CHECK(max_abs_diff(encode_obj(crop, w, all), encode_obj(crop, w, one)) < 1e-9);
  CHECK(max_abs_diff(encode_obj(crop, w, all), encode_cls(crop, w)) < 1e-9);
}

TEST_CASE("encode_obj rejects an empty mask") {
  EncoderConfig cfg;
  const EncoderWeights w = gen_weights(cfg, 1);
  try {
    encode_obj(Tensor({32, 32, 3}), w, BinaryMask(1, 17));
    FAIL("expected an empty-mask error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kEmptyObjectMask);
  }
}

TEST_CASE("extract_object_embedding composes the OAKE steps") {
  EncoderConfig cfg;
  const EncoderWeights w = gen_weights(cfg, 70);
  Rng rng(71);
  const Tensor image = random_tensor(rng, {60, 90, 3}, 0.0, 1.0);
  const Box p(20.5, 10.25, 41, 30);
  const Box square = transform_proposal(p, 2.0, ImageSize(90, 60));
  const Vec want = encode_obj(crop_and_resize(image, square, 32, 32), w,
                              patch_overlap_mask(p, square, 32, 8, 17));
  CHECK(extract_object_embedding(image, p, 2.0, w) == want);
}

TEST_CASE("encode_global and encode_blocks") {
  EncoderConfig cfg;
  const EncoderWeights w = gen_weights(cfg, 80);
  Rng rng(81);
  const Tensor image = random_tensor(rng, {64, 96, 3}, 0.0, 1.0);
  CHECK(encode_global(image, w) == encode_cls(bilinear_resize(image, 32, 32), w));
  const auto blocks = encode_blocks(image, w);
  REQUIRE(blocks.size() == 6);
  CHECK(blocks[4] == encode_cls(crop_and_resize(image, Box(32, 32, 64, 64), 32, 32), w));
  CHECK_THROWS_AS(encode_blocks(random_tensor(rng, {40, 32, 3}), w), Error);
}

TEST_CASE("weights round trip") {
  EncoderConfig cfg;
  cfg.attention_only = true;
  const EncoderWeights w = gen_weights(cfg, 90);
  CHECK(weights_from_container(weights_to_container(w)) == w);
  CHECK(gen_weights(cfg, 90) == w);
  CHECK_FALSE(gen_weights(cfg, 91) == w);

  const auto dir = std::filesystem::temp_directory_path() / "oadp_test_encoder";
  std::filesystem::create_directories(dir);
  save_weights(w, dir / "w.oadpt");
  CHECK(load_weights(dir / "w.oadpt") == w);

  const auto bytes = read_file_bytes(dir / "w.oadpt");
  write_file_atomic(dir / "cut.oadpt", std::span(bytes.data(), bytes.size() - 7));
  try {
    load_weights(dir / "cut.oadpt");
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kFormat);
  }

  TensorContainer bad = weights_to_container(w);
  TensorContainer wrong;
  for (const auto& e : bad.entries()) {
    wrong.add(e.name, e.name == "visual/out_proj" ? Tensor({3, 3}) : e.tensor, e.dtype);
  }
  CHECK_THROWS_AS(weights_from_container(wrong), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("gen_weights draw statistics") {
  EncoderConfig cfg;
  const EncoderWeights w = gen_weights(cfg, 123);
  const auto& pos = w.positions;
  REQUIRE(pos.size() >= 1000);
  const double a = 1.0 / std::sqrt(static_cast<double>(cfg.width));
  double mean = 0.0;
  for (double v : pos.data()) {
    CHECK(std::abs(v) <= a);
    mean += v;
  }
  mean /= static_cast<double>(pos.size());
  const double sigma = a / std::sqrt(3.0) / std::sqrt(static_cast<double>(pos.size()));
  CHECK(std::abs(mean) < 5 * sigma);
}
