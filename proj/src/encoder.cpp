#include "oadp/encoder.hpp"

#include <cmath>
#include <string>

namespace oadp {

namespace {

void expect_len(const Vec& v, std::size_t n, const std::string& name) {
  check(v.size() == n, ErrorKind::kDimension,
        name + ": expected length " + std::to_string(n) + ", got " +
            std::to_string(v.size()));
}

void expect_shape(const Tensor& t, const Shape& shape, const std::string& name) {
  check(t.shape() == shape, ErrorKind::kDimension,
        name + ": expected shape " + shape_string(shape) + ", got " +
            shape_string(t.shape()));
}

double quick_gelu(double x) { return x / (1.0 + std::exp(-1.702 * x)); }

Tensor self_attention(const Tensor& x, const BlockWeights& b,
                      std::size_t heads, const BinaryMask& allow) {
  const Tensor q = linear(x, b.w_q, b.b_q);
  const Tensor k = linear(x, b.w_k, b.b_k);
  const Tensor v = linear(x, b.w_v, b.b_v);
  const std::size_t n = x.dim(0), width = x.dim(1);
  const std::size_t head_dim = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Tensor mixed({n, width});
  Tensor scores({n, n});
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * head_dim;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < head_dim; ++c) acc += q(i, off + c) * k(j, off + c);
        scores(i, j) = acc * scale;
      }
    }
    const Tensor attn = masked_softmax(scores, allow);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < head_dim; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += attn(i, j) * v(j, off + c);
        mixed(i, off + c) = acc;
      }
    }
  }
  return linear(mixed, b.w_o, b.b_o);
}

void add_in_place(Tensor& x, const Tensor& delta) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += delta[i];
}

}  // namespace

void EncoderConfig::validate() const {
  check(patch >= 1 && resolution >= patch && resolution % patch == 0,
        ErrorKind::kConfig, "encoder resolution must be a positive multiple of the patch side");
  check(heads >= 1 && width >= heads && width % heads == 0, ErrorKind::kConfig,
        "token width must be a positive multiple of the head count");
  check(layers >= 1, ErrorKind::kConfig, "encoder needs at least one layer");
  check(embed_dim >= 1, ErrorKind::kConfig, "embedding dimension must be positive");
}

void EncoderWeights::validate() const {
  config.validate();
  const std::size_t dx = config.width, nx = config.token_count();
  expect_shape(patch_proj, {config.patch_dim(), dx}, "patch_proj");
  expect_len(patch_bias, dx, "patch_bias");
  expect_shape(positions, {nx, dx}, "positions");
  expect_len(cls_seed, dx, "cls_seed");
  expect_len(ln_pre_gain, dx, "ln_pre gain");
  expect_len(ln_pre_bias, dx, "ln_pre bias");
  check(blocks.size() == config.layers, ErrorKind::kDimension,
        "block count does not match layer count");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string p = "blocks/" + std::to_string(i) + "/";
    expect_len(b.ln1_gain, dx, p + "ln1 gain");
    expect_len(b.ln1_bias, dx, p + "ln1 bias");
    for (const Tensor* t : {&b.w_q, &b.w_k, &b.w_v, &b.w_o}) {
      expect_shape(*t, {dx, dx}, p + "attention projection");
    }
    for (const Vec* v : {&b.b_q, &b.b_k, &b.b_v, &b.b_o}) {
      expect_len(*v, dx, p + "attention bias");
    }
    expect_len(b.ln2_gain, dx, p + "ln2 gain");
    expect_len(b.ln2_bias, dx, p + "ln2 bias");
    expect_shape(b.w_fc1, {dx, 4 * dx}, p + "fc1");
    expect_len(b.b_fc1, 4 * dx, p + "fc1 bias");
    expect_shape(b.w_fc2, {4 * dx, dx}, p + "fc2");
    expect_len(b.b_fc2, dx, p + "fc2 bias");
  }
  expect_len(ln_post_gain, dx, "ln_post gain");
  expect_len(ln_post_bias, dx, "ln_post bias");
  expect_shape(out_proj, {dx, config.embed_dim}, "out_proj");
}

Tensor tokenize(const Tensor& crop, const EncoderWeights& w) {
  const auto& cfg = w.config;
  const std::size_t r = cfg.resolution;
  check(crop.rank() == 3 && crop.dim(0) == r && crop.dim(1) == r && crop.dim(2) == 3,
        ErrorKind::kDimension,
        "crop must be " + std::to_string(r) + "x" + std::to_string(r) +
            "x3, got " + shape_string(crop.shape()));
  const std::size_t grid = cfg.grid(), p = cfg.patch;
  const std::size_t n_patches = grid * grid;

  Tensor flat({n_patches, cfg.patch_dim()});
  for (std::size_t gy = 0; gy < grid; ++gy) {
    for (std::size_t gx = 0; gx < grid; ++gx) {
      auto row = flat.row(gy * grid + gx);
      std::size_t k = 0;
      for (std::size_t py = 0; py < p; ++py) {
        for (std::size_t px = 0; px < p; ++px) {
          for (std::size_t ch = 0; ch < 3; ++ch) {
            row[k++] = crop(gy * p + py, gx * p + px, ch);
          }
        }
      }
    }
  }
  const Tensor patches = linear(flat, w.patch_proj, w.patch_bias);

  Tensor tokens({n_patches + 1, cfg.width});
  for (std::size_t i = 0; i < n_patches; ++i) {
    for (std::size_t c = 0; c < cfg.width; ++c) {
      tokens(i, c) = patches(i, c) + w.positions(i, c);
    }
  }
  for (std::size_t c = 0; c < cfg.width; ++c) {
    tokens(n_patches, c) = w.cls_seed[c] + w.positions(n_patches, c);
  }
  return tokens;
}

Tensor run_blocks(Tensor x, const EncoderWeights& w, const BinaryMask* allow) {
  const auto& cfg = w.config;
  const BinaryMask full(x.dim(0), x.dim(0), true);
  const BinaryMask& mask = allow ? *allow : full;
  if (!cfg.attention_only) x = layer_norm(x, w.ln_pre_gain, w.ln_pre_bias);
  for (const auto& b : w.blocks) {
    if (cfg.attention_only) {
      add_in_place(x, self_attention(x, b, cfg.heads, mask));
      continue;
    }
    add_in_place(x, self_attention(layer_norm(x, b.ln1_gain, b.ln1_bias), b,
                                   cfg.heads, mask));
    Tensor hidden = linear(layer_norm(x, b.ln2_gain, b.ln2_bias), b.w_fc1, b.b_fc1);
    for (double& v : hidden.data()) v = quick_gelu(v);
    add_in_place(x, linear(hidden, b.w_fc2, b.b_fc2));
  }
  return x;
}

Vec project_token(const Tensor& tokens, std::size_t row, const EncoderWeights& w) {
  const auto r = tokens.row(row);
  const Tensor one({1, tokens.dim(1)}, Vec(r.begin(), r.end()));
  const Tensor out =
      matmul(layer_norm(one, w.ln_post_gain, w.ln_post_bias), w.out_proj);
  return out.values();
}

Tensor encode_cls_tokens(const Tensor& crop, const EncoderWeights& w) {
  return run_blocks(tokenize(crop, w), w);
}

Vec encode_cls(const Tensor& crop, const EncoderWeights& w) {
  const Tensor out = encode_cls_tokens(crop, w);
  return project_token(out, out.dim(0) - 1, w);
}

Tensor encode_obj_tokens(const Tensor& crop, const EncoderWeights& w,
                         const BinaryMask& object_mask) {
  const Tensor x = tokenize(crop, w);
  const std::size_t nx = x.dim(0), dx = x.dim(1);
  check(object_mask.rows() == 1 && object_mask.cols() == nx, ErrorKind::kDimension,
        "object mask must be 1 x " + std::to_string(nx));
  check(object_mask.count() > 0, ErrorKind::kEmptyObjectMask,
        "empty object mask: [OBJ] would attend only to itself");

  // X' = [X; x_obj] with x_obj = X_{N_x}, the position-augmented [CLS] row.
  std::vector<double> data(x.data().begin(), x.data().end());
  const auto cls = x.row(nx - 1);
  data.insert(data.end(), cls.begin(), cls.end());
  Tensor augmented({nx + 1, dx}, std::move(data));

  const BinaryMask attention = build_attention_mask(object_mask);
  return run_blocks(std::move(augmented), w, &attention);
}

Vec encode_obj(const Tensor& crop, const EncoderWeights& w,
               const BinaryMask& object_mask) {
  const Tensor out = encode_obj_tokens(crop, w, object_mask);
  return project_token(out, out.dim(0) - 1, w);
}

Vec extract_object_embedding(const Tensor& image, const Box& proposal,
                             double scale_ratio, const EncoderWeights& w) {
  check(image.rank() == 3 && image.dim(2) == 3, ErrorKind::kDimension,
        "image must be H x W x 3, got " + shape_string(image.shape()));
  const ImageSize size(image.dim(1), image.dim(0));
  const auto& cfg = w.config;
  const Box square = transform_proposal(proposal, scale_ratio, size);
  const Tensor crop = crop_and_resize(image, square, cfg.resolution, cfg.resolution);
  const BinaryMask mask = patch_overlap_mask(proposal, square, cfg.resolution,
                                             cfg.patch, cfg.token_count());
  return encode_obj(crop, w, mask);
}

Vec encode_global(const Tensor& image, const EncoderWeights& w) {
  const std::size_t r = w.config.resolution;
  return encode_cls(bilinear_resize(image, r, r), w);
}

std::vector<Vec> encode_blocks(const Tensor& image, const EncoderWeights& w) {
  check(image.rank() == 3 && image.dim(2) == 3, ErrorKind::kDimension,
        "image must be H x W x 3, got " + shape_string(image.shape()));
  const std::size_t r = w.config.resolution;
  std::vector<Vec> out;
  for (const Box& b : partition_blocks(ImageSize(image.dim(1), image.dim(0)), r)) {
    out.push_back(encode_cls(crop_and_resize(image, b, r, r), w));
  }
  return out;
}

TensorContainer weights_to_container(const EncoderWeights& w, DType dtype) {
  w.validate();
  const auto& c = w.config;
  TensorContainer out;
  out.add("meta/config",
          Vec{static_cast<double>(c.resolution), static_cast<double>(c.patch),
              static_cast<double>(c.width), static_cast<double>(c.heads),
              static_cast<double>(c.layers), static_cast<double>(c.embed_dim),
              c.attention_only ? 1.0 : 0.0},
          DType::kF64);
  out.add("visual/patch_proj", w.patch_proj, dtype);
  out.add("visual/patch_bias", w.patch_bias, dtype);
  out.add("visual/positions", w.positions, dtype);
  out.add("visual/cls_seed", w.cls_seed, dtype);
  out.add("visual/ln_pre/gain", w.ln_pre_gain, dtype);
  out.add("visual/ln_pre/bias", w.ln_pre_bias, dtype);
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    const auto& b = w.blocks[i];
    const std::string p = "visual/blocks/" + std::to_string(i) + "/";
    out.add(p + "ln1/gain", b.ln1_gain, dtype);
    out.add(p + "ln1/bias", b.ln1_bias, dtype);
    out.add(p + "attn/w_q", b.w_q, dtype);
    out.add(p + "attn/b_q", b.b_q, dtype);
    out.add(p + "attn/w_k", b.w_k, dtype);
    out.add(p + "attn/b_k", b.b_k, dtype);
    out.add(p + "attn/w_v", b.w_v, dtype);
    out.add(p + "attn/b_v", b.b_v, dtype);
    out.add(p + "attn/w_o", b.w_o, dtype);
    out.add(p + "attn/b_o", b.b_o, dtype);
    out.add(p + "ln2/gain", b.ln2_gain, dtype);
    out.add(p + "ln2/bias", b.ln2_bias, dtype);
    out.add(p + "mlp/w_fc1", b.w_fc1, dtype);
    out.add(p + "mlp/b_fc1", b.b_fc1, dtype);
    out.add(p + "mlp/w_fc2", b.w_fc2, dtype);
    out.add(p + "mlp/b_fc2", b.b_fc2, dtype);
  }
  out.add("visual/ln_post/gain", w.ln_post_gain, dtype);
  out.add("visual/ln_post/bias", w.ln_post_bias, dtype);
  out.add("visual/out_proj", w.out_proj, dtype);
  return out;
}

EncoderWeights weights_from_container(const TensorContainer& c) {
  const Vec meta = c.get_vec("meta/config");
  check(meta.size() == 7, ErrorKind::kFormat, "meta/config must hold 7 values");
  for (double v : meta) {
    check(v >= 0.0 && v == std::floor(v), ErrorKind::kFormat,
          "meta/config values must be non-negative integers");
  }
  EncoderWeights w;
  auto& cfg = w.config;
  cfg.resolution = static_cast<std::size_t>(meta[0]);
  cfg.patch = static_cast<std::size_t>(meta[1]);
  cfg.width = static_cast<std::size_t>(meta[2]);
  cfg.heads = static_cast<std::size_t>(meta[3]);
  cfg.layers = static_cast<std::size_t>(meta[4]);
  cfg.embed_dim = static_cast<std::size_t>(meta[5]);
  cfg.attention_only = meta[6] != 0.0;
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, std::string("invalid encoder config: ") + e.what());
  }

  w.patch_proj = c.get("visual/patch_proj");
  w.patch_bias = c.get_vec("visual/patch_bias");
  w.positions = c.get("visual/positions");
  w.cls_seed = c.get_vec("visual/cls_seed");
  w.ln_pre_gain = c.get_vec("visual/ln_pre/gain");
  w.ln_pre_bias = c.get_vec("visual/ln_pre/bias");
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const std::string p = "visual/blocks/" + std::to_string(i) + "/";
    BlockWeights b;
    b.ln1_gain = c.get_vec(p + "ln1/gain");
    b.ln1_bias = c.get_vec(p + "ln1/bias");
    b.w_q = c.get(p + "attn/w_q");
    b.b_q = c.get_vec(p + "attn/b_q");
    b.w_k = c.get(p + "attn/w_k");
    b.b_k = c.get_vec(p + "attn/b_k");
    b.w_v = c.get(p + "attn/w_v");
    b.b_v = c.get_vec(p + "attn/b_v");
    b.w_o = c.get(p + "attn/w_o");
    b.b_o = c.get_vec(p + "attn/b_o");
    b.ln2_gain = c.get_vec(p + "ln2/gain");
    b.ln2_bias = c.get_vec(p + "ln2/bias");
    b.w_fc1 = c.get(p + "mlp/w_fc1");
    b.b_fc1 = c.get_vec(p + "mlp/b_fc1");
    b.w_fc2 = c.get(p + "mlp/w_fc2");
    b.b_fc2 = c.get_vec(p + "mlp/b_fc2");
    w.blocks.push_back(std::move(b));
  }
  w.ln_post_gain = c.get_vec("visual/ln_post/gain");
  w.ln_post_bias = c.get_vec("visual/ln_post/bias");
  w.out_proj = c.get("visual/out_proj");
  try {
    w.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, std::string("weight shape mismatch: ") + e.what());
  }
  return w;
}

void save_weights(const EncoderWeights& w, const std::filesystem::path& path,
                  DType dtype) {
  write_container(path, weights_to_container(w, dtype));
}

EncoderWeights load_weights(const std::filesystem::path& path) {
  return weights_from_container(read_container(path));
}

}  // namespace oadp
