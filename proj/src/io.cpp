#include "oadp/io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace oadp {

namespace fs = std::filesystem;

namespace {

const json& require(const json& j, const char* key, const std::string& where) {
  check(j.is_object() && j.contains(key), ErrorKind::kFormat,
        where + ": missing field '" + key + "'");
  return j.at(key);
}

double number(const json& j, const std::string& what) {
  check(j.is_number(), ErrorKind::kFormat, what + " must be a number");
  return j.get<double>();
}

Vec number_array(const json& j, const std::string& what) {
  check(j.is_array(), ErrorKind::kFormat, what + " must be an array of numbers");
  Vec out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(number(v, what));
  return out;
}

std::string id_string(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  fail(ErrorKind::kFormat, "image_id must be a string or an integer");
}

template <typename Fn>
auto wrap_format(const std::string& where, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kFormat || e.kind() == ErrorKind::kConfig) throw;
    fail(ErrorKind::kFormat, where + ": " + e.what());
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, where + ": " + e.what());
  }
}

std::vector<std::string> nonempty_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kFormat, what + ": " + e.what());
  }
}

Box box_from_json(const json& j) {
  const Vec v = number_array(j, "box");
  check(v.size() == 4, ErrorKind::kFormat, "box must have 4 coordinates");
  return Box(v[0], v[1], v[2], v[3]);
}

json box_to_json(const Box& b) { return json::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

ManifestEntry manifest_entry_from_json(const json& j) {
  return wrap_format("manifest entry", [&] {
    ManifestEntry e;
    e.image_id = id_string(require(j, "image_id", "manifest entry"));
    const std::string where = "manifest entry " + e.image_id;
    const json& image = require(j, "image", where);
    check(image.is_string(), ErrorKind::kFormat, where + ": image must be a path string");
    e.image = image.get<std::string>();
    const Vec size = number_array(require(j, "size", where), "size");
    check(size.size() == 2 && size[0] >= 1 && size[1] >= 1 &&
              size[0] == std::floor(size[0]) && size[1] == std::floor(size[1]),
          ErrorKind::kFormat, where + ": size must be [W, H] positive integers");
    e.size = ImageSize(static_cast<std::size_t>(size[0]), static_cast<std::size_t>(size[1]));
    const Box frame(0.0, 0.0, size[0], size[1]);
    if (j.contains("proposals")) {
      for (const auto& p : j.at("proposals")) {
        const Box b = box_from_json(require(p, "box", where));
        check(intersection_area(b, frame) == b.area(), ErrorKind::kFormat,
              where + ": proposal outside the image");
        e.proposals.emplace_back(b, number(require(p, "objectness", where), "objectness"));
      }
    }
    if (j.contains("annotations")) {
      for (const auto& a : j.at("annotations")) {
        const json& cat = require(a, "category", where);
        check(cat.is_string(), ErrorKind::kFormat, where + ": category must be a name");
        e.annotations.push_back({box_from_json(require(a, "box", where)),
                                 cat.get<std::string>()});
      }
    }
    return e;
  });
}

json manifest_entry_to_json(const ManifestEntry& e) {
  json proposals = json::array();
  for (const auto& p : e.proposals) {
    proposals.push_back({{"box", box_to_json(p.box)}, {"objectness", p.objectness}});
  }
  json annotations = json::array();
  for (const auto& a : e.annotations) {
    annotations.push_back({{"box", box_to_json(a.box)}, {"category", a.category}});
  }
  return {{"image_id", e.image_id},
          {"image", e.image},
          {"size", json::array({e.size.width, e.size.height})},
          {"proposals", proposals},
          {"annotations", annotations}};
}

fs::path Manifest::image_path(const ManifestEntry& e) const {
  const fs::path p(e.image);
  return p.is_absolute() ? p : base_dir / p;
}

Manifest read_manifest(const fs::path& path) {
  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> ids;
  std::size_t line_no = 0;
  for (const auto& line : nonempty_lines(read_text(path))) {
    ++line_no;
    m.entries.push_back(manifest_entry_from_json(
        parse_json(line, path.string() + " line " + std::to_string(line_no))));
    check(ids.insert(m.entries.back().image_id).second, ErrorKind::kFormat,
          "duplicate image_id " + m.entries.back().image_id);
  }
  return m;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::string text;
  for (const auto& e : entries) text += manifest_entry_to_json(e).dump() + "\n";
  write_file_atomic(path, text);
}

Tensor read_ppm(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t pos = 0;
  const auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    return t;
  };
  const auto integer = [&](const char* what) {
    const std::string t = token();
    check(!t.empty() && t.find_first_not_of("0123456789") == std::string::npos,
          ErrorKind::kFormat, path.string() + ": bad PPM " + what);
    return std::stoul(t);
  };
  check(token() == "P6", ErrorKind::kFormat, path.string() + ": not a binary PPM (P6)");
  const std::size_t w = integer("width"), h = integer("height"), maxval = integer("maxval");
  check(w >= 1 && h >= 1 && maxval >= 1 && maxval <= 255, ErrorKind::kFormat,
        path.string() + ": unsupported PPM header");
  ++pos;  // single whitespace after maxval
  check(bytes.size() >= pos + w * h * 3, ErrorKind::kFormat,
        path.string() + ": truncated PPM payload");
  Tensor img({h, w, 3});
  for (std::size_t i = 0; i < w * h * 3; ++i) {
    img[i] = static_cast<double>(bytes[pos + i]) / static_cast<double>(maxval);
  }
  return img;
}

void write_ppm(const fs::path& path, const Tensor& image) {
  check(image.rank() == 3 && image.dim(2) == 3, ErrorKind::kDimension,
        "PPM needs an H x W x 3 image");
  const std::string header = "P6\n" + std::to_string(image.dim(1)) + " " +
                             std::to_string(image.dim(0)) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (double v : image.data()) {
    bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  write_file_atomic(path, bytes);
}

Tensor load_image(const fs::path& path) {
  if (path.extension() == ".ppm") return read_ppm(path);
  const TensorContainer c = read_container(path);
  const Tensor& img = c.get("image");
  check(img.rank() == 3 && img.dim(2) == 3, ErrorKind::kFormat,
        path.string() + ": image entry must be H x W x 3");
  return img;
}

Tensor load_manifest_image(const Manifest& m, const ManifestEntry& e) {
  Tensor img = load_image(m.image_path(e));
  check(img.dim(1) == e.size.width && img.dim(0) == e.size.height, ErrorKind::kFormat,
        "image " + e.image_id + " is " + std::to_string(img.dim(1)) + "x" +
            std::to_string(img.dim(0)) + " but the manifest declares " +
            std::to_string(e.size.width) + "x" + std::to_string(e.size.height));
  return img;
}

CategoryTable category_table_from_json(const json& j) {
  return wrap_format("category table", [&] {
    const json* cats = nullptr;
    const json* bg = nullptr;
    json collected = json::array();
    if (j.is_object()) {
      cats = &require(j, "categories", "category table");
      bg = &require(j, "bg_embedding", "category table");
    } else {
      check(j.is_array(), ErrorKind::kFormat, "category table must be an object or array");
      for (const auto& item : j) {
        if (item.is_object() && item.contains("bg_embedding")) {
          check(bg == nullptr, ErrorKind::kFormat, "category table: bg_embedding given twice");
          bg = &item.at("bg_embedding");
        } else {
          collected.push_back(item);
        }
      }
      check(bg != nullptr, ErrorKind::kFormat, "category table: missing bg_embedding");
      cats = &collected;
    }
    check(cats->is_array(), ErrorKind::kFormat, "categories must be an array");
    std::vector<Category> out;
    for (const auto& c : *cats) {
      const json& name = require(c, "name", "category");
      check(name.is_string(), ErrorKind::kFormat, "category name must be a string");
      const std::string split = require(c, "split", "category").get<std::string>();
      check(split == "base" || split == "novel", ErrorKind::kFormat,
            "category split must be \"base\" or \"novel\"");
      out.push_back({name.get<std::string>(),
                     number_array(require(c, "embedding", "category"), "embedding"),
                     split == "base" ? Split::kBase : Split::kNovel});
    }
    return CategoryTable(std::move(out), number_array(*bg, "bg_embedding"));
  });
}

json category_table_to_json(const CategoryTable& t) {
  json cats = json::array();
  for (const auto& c : t.categories()) {
    cats.push_back({{"name", c.name},
                    {"split", c.split == Split::kBase ? "base" : "novel"},
                    {"embedding", c.embedding}});
  }
  return {{"categories", cats}, {"bg_embedding", t.background()}};
}

CategoryTable read_category_table(const fs::path& path) {
  return category_table_from_json(parse_json(read_text(path), path.string()));
}

void write_category_table(const fs::path& path, const CategoryTable& t) {
  write_file_atomic(path, category_table_to_json(t).dump() + "\n");
}

PLConfig RunConfig::pl_config() const {
  PLConfig c;
  c.gamma = gamma;
  c.nms_iou = nms_iou;
  c.score_threshold = score_threshold;
  c.max_per_image = max_per_image;
  c.all_novel_candidates = all_novel_candidates;
  c.threads = threads;
  return c;
}

void RunConfig::validate() const {
  check(scale_ratio > 0.0, ErrorKind::kConfig, "r must be positive");
  CalibrationConfig{lambda}.validate();
  weights.validate();
  check(!resolution || *resolution >= 1, ErrorKind::kConfig, "R must be positive");
  check(threads >= 1, ErrorKind::kConfig, "threads must be at least 1");
  pl_config().validate();
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  wrap_format("run config", [&] {
    check(j.is_object(), ErrorKind::kFormat, "run config must be a JSON object");
    static const std::set<std::string> known = {
        "r", "lambda", "gamma", "w_O", "w_B", "w_G", "R", "nms_iou", "score_threshold",
        "max_per_image", "seed", "precision", "all_novel_candidates", "threads"};
    for (const auto& [key, value] : j.items()) {
      check(known.count(key) > 0, ErrorKind::kConfig, "unknown run config key '" + key + "'");
    }
    const auto num = [&](const char* key, double& out) {
      if (j.contains(key)) out = number(j.at(key), key);
    };
    const auto count = [&](const char* key) -> std::optional<std::size_t> {
      if (!j.contains(key)) return std::nullopt;
      check(j.at(key).is_number_unsigned(), ErrorKind::kConfig,
            std::string(key) + " must be a non-negative integer");
      return j.at(key).get<std::size_t>();
    };
    num("r", c.scale_ratio);
    num("lambda", c.lambda);
    num("gamma", c.gamma);
    num("w_O", c.weights.object);
    num("w_B", c.weights.block);
    num("w_G", c.weights.global);
    num("nms_iou", c.nms_iou);
    num("score_threshold", c.score_threshold);
    c.resolution = count("R");
    if (auto v = count("max_per_image")) c.max_per_image = *v;
    if (auto v = count("seed")) c.seed = *v;
    if (auto v = count("threads")) c.threads = *v;
    if (j.contains("precision")) {
      const std::string p = j.at("precision").get<std::string>();
      check(p == "f64" || p == "f32", ErrorKind::kConfig, "precision must be f64 or f32");
      c.precision = p == "f32" ? DType::kF32 : DType::kF64;
    }
    if (j.contains("all_novel_candidates")) {
      c.all_novel_candidates = j.at("all_novel_candidates").get<bool>();
    }
    return 0;
  });
  c.validate();
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json j = {{"r", c.scale_ratio},
            {"lambda", c.lambda},
            {"gamma", c.gamma},
            {"w_O", c.weights.object},
            {"w_B", c.weights.block},
            {"w_G", c.weights.global},
            {"nms_iou", c.nms_iou},
            {"score_threshold", c.score_threshold},
            {"max_per_image", c.max_per_image},
            {"seed", c.seed},
            {"precision", c.precision == DType::kF32 ? "f32" : "f64"},
            {"all_novel_candidates", c.all_novel_candidates},
            {"threads", c.threads}};
  if (c.resolution) j["R"] = *c.resolution;
  return j;
}

RunConfig read_run_config(const fs::path& path) {
  return run_config_from_json(parse_json(read_text(path), path.string()));
}

json pl_record_to_json(const PLRecord& r, const CategoryTable& table) {
  json pls = json::array();
  for (const auto& pl : r.labels) {
    pls.push_back({{"box", box_to_json(pl.box)},
                   {"category", table[pl.category].name},
                   {"score", pl.score}});
  }
  return {{"image_id", r.image_id}, {"pls", pls}};
}

std::string pl_records_to_jsonl(const std::vector<PLRecord>& records,
                                const CategoryTable& table) {
  std::string text;
  for (const auto& r : records) text += pl_record_to_json(r, table).dump() + "\n";
  return text;
}

std::vector<NamedPLRecord> read_pl_file(const fs::path& path) {
  std::vector<NamedPLRecord> out;
  std::size_t line_no = 0;
  for (const auto& line : nonempty_lines(read_text(path))) {
    ++line_no;
    const std::string where = path.string() + " line " + std::to_string(line_no);
    const json j = parse_json(line, where);
    out.push_back(wrap_format(where, [&] {
      NamedPLRecord r;
      r.image_id = id_string(require(j, "image_id", where));
      for (const auto& pl : require(j, "pls", where)) {
        const double score = number(require(pl, "score", where), "score");
        check(score >= 0.0 && score <= 1.0, ErrorKind::kFormat, where + ": score outside [0, 1]");
        r.labels.push_back({box_from_json(require(pl, "box", where)),
                            require(pl, "category", where).get<std::string>(), score});
      }
      return r;
    }));
  }
  return out;
}

}  // namespace oadp
