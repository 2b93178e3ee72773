#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "oadp/pipeline.hpp"

namespace py = pybind11;
using namespace oadp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, Vec(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Array to_array(const Vec& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Vec to_vec(const Array& a) { return Vec(a.data(), a.data() + a.size()); }

Box to_box(const std::array<double, 4>& b) { return Box(b[0], b[1], b[2], b[3]); }
std::array<double, 4> from_box(const Box& b) { return {b.x1(), b.y1(), b.x2(), b.y2()}; }

BinaryMask to_mask(const py::array_t<bool, py::array::c_style | py::array::forcecast>& a,
                   std::size_t tokens) {
  check(static_cast<std::size_t>(a.size()) == tokens, ErrorKind::kDimension,
        "mask needs one entry per token");
  BinaryMask m(1, tokens);
  for (std::size_t i = 0; i < tokens; ++i) m.set(0, i, a.data()[i]);
  return m;
}

py::dict json_to_dict(const json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_oadp, m) {
  m.doc() = "Object-aware distillation pyramid primitives";

  static PyObject* const error =
      PyErr_NewException("oadp._oadp.OadpError", PyExc_ValueError, nullptr);
  m.attr("OadpError") = py::handle(error);
  // Raised with args (kind, message), kind as in the CLI's JSON errors.
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(error, py::make_tuple(error_kind_name(e.kind()), e.what()).ptr());
    }
  });

  py::class_<EncoderConfig>(m, "EncoderConfig")
      .def(py::init<>())
      .def_readwrite("resolution", &EncoderConfig::resolution)
      .def_readwrite("patch", &EncoderConfig::patch)
      .def_readwrite("width", &EncoderConfig::width)
      .def_readwrite("heads", &EncoderConfig::heads)
      .def_readwrite("layers", &EncoderConfig::layers)
      .def_readwrite("embed_dim", &EncoderConfig::embed_dim)
      .def_readwrite("attention_only", &EncoderConfig::attention_only)
      .def_property_readonly("token_count", &EncoderConfig::token_count);

  py::class_<EncoderWeights>(m, "EncoderWeights")
      .def_readonly("config", &EncoderWeights::config)
      .def("save", [](const EncoderWeights& w, const std::filesystem::path& p) { save_weights(w, p); })
      .def("__eq__", [](const EncoderWeights& a, const EncoderWeights& b) { return a == b; });

  m.def("gen_weights", &gen_weights, py::arg("config"), py::arg("seed"));
  m.def("load_weights", &load_weights, py::arg("path"));

  py::enum_<Split>(m, "Split").value("BASE", Split::kBase).value("NOVEL", Split::kNovel);

  py::class_<CategoryTable>(m, "CategoryTable")
      .def(py::init([](const std::vector<std::tuple<std::string, Array, Split>>& cats,
                       const Array& bg) {
             std::vector<Category> out;
             for (const auto& [name, emb, split] : cats) out.push_back({name, to_vec(emb), split});
             return CategoryTable(std::move(out), to_vec(bg));
           }),
           py::arg("categories"), py::arg("background"))
      .def("__len__", &CategoryTable::size)
      .def_property_readonly("dim", &CategoryTable::dim)
      .def_property_readonly("names", [](const CategoryTable& t) {
        std::vector<std::string> names;
        for (const auto& c : t.categories()) names.push_back(c.name);
        return names;
      })
      .def("is_novel", &CategoryTable::is_novel);

  m.def("read_category_table", &read_category_table, py::arg("path"));
  m.def("gen_category_table", &gen_category_table, py::arg("base"), py::arg("novel"),
        py::arg("dim"), py::arg("seed"));

  m.def("iou", [](const std::array<double, 4>& a, const std::array<double, 4>& b) {
    return iou(to_box(a), to_box(b));
  });
  m.def(
      "transform_proposal",
      [](const std::array<double, 4>& box, double r, std::size_t width, std::size_t height) {
        return from_box(transform_proposal(to_box(box), r, ImageSize(width, height)));
      },
      py::arg("box"), py::arg("r"), py::arg("width"), py::arg("height"));
  m.def(
      "patch_overlap_mask",
      [](const std::array<double, 4>& proposal, const std::array<double, 4>& square,
         const EncoderConfig& cfg) {
        const BinaryMask mask = patch_overlap_mask(to_box(proposal), to_box(square),
                                                   cfg.resolution, cfg.patch, cfg.token_count());
        std::vector<bool> out(cfg.token_count());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask(0, i);
        return out;
      },
      py::arg("proposal"), py::arg("square"), py::arg("config"));

  m.def("roi_align", [](const Array& f, const std::array<double, 4>& box, std::size_t out,
                        std::size_t samples) {
    return to_array(roi_align(to_tensor(f), to_box(box), out, samples));
  }, py::arg("feature"), py::arg("box"), py::arg("out"), py::arg("samples_per_bin") = 2);
  m.def("bilinear_resize", [](const Array& img, std::size_t h, std::size_t w) {
    return to_array(bilinear_resize(to_tensor(img), h, w));
  });

  m.def("encode_cls", [](const Array& crop, const EncoderWeights& w) {
    return to_array(encode_cls(to_tensor(crop), w));
  });
  m.def("encode_cls_tokens", [](const Array& crop, const EncoderWeights& w) {
    return to_array(encode_cls_tokens(to_tensor(crop), w));
  });
  m.def("encode_obj", [](const Array& crop, const EncoderWeights& w,
                         const py::array_t<bool, py::array::c_style | py::array::forcecast>& mask) {
    return to_array(encode_obj(to_tensor(crop), w, to_mask(mask, w.config.token_count())));
  });
  m.def("encode_obj_tokens", [](const Array& crop, const EncoderWeights& w,
                                const py::array_t<bool, py::array::c_style | py::array::forcecast>& mask) {
    return to_array(encode_obj_tokens(to_tensor(crop), w, to_mask(mask, w.config.token_count())));
  });
  m.def("extract_object_embedding",
        [](const Array& image, const std::array<double, 4>& box, double r, const EncoderWeights& w) {
          return to_array(extract_object_embedding(to_tensor(image), to_box(box), r, w));
        },
        py::arg("image"), py::arg("box"), py::arg("r"), py::arg("weights"));

  m.def("probs_with_bg", [](const Array& e, const CategoryTable& t) {
    return to_array(probs_with_bg(to_vec(e), t));
  });
  m.def("pl_probs", [](const Array& e, const CategoryTable& t) {
    return to_array(pl_probs(to_vec(e), t));
  });
  m.def("calibrate",
        [](const Array& with_bg, const Array& object, const CategoryTable& t, double lambda) {
          return to_array(calibrate(to_vec(with_bg), to_vec(object), t, {lambda}));
        },
        py::arg("with_bg"), py::arg("object"), py::arg("table"), py::arg("lam") = 2.0 / 3.0);
  m.def("confidence", &confidence, py::arg("prob"), py::arg("objectness"), py::arg("gamma") = 0.3);

  m.def(
      "classwise_nms",
      [](const std::vector<std::array<double, 4>>& boxes, const std::vector<std::size_t>& cats,
         const std::vector<double>& scores, double thr) {
        check(boxes.size() == cats.size() && boxes.size() == scores.size(),
              ErrorKind::kDimension, "boxes, categories and scores must align");
        std::vector<Detection> d;
        for (std::size_t i = 0; i < boxes.size(); ++i) d.push_back({to_box(boxes[i]), cats[i], scores[i]});
        return classwise_nms(d, thr);
      },
      py::arg("boxes"), py::arg("categories"), py::arg("scores"), py::arg("iou_threshold") = 0.5);

  m.def("l1_loss", [](const Array& s, const Array& t) {
    return l1_distance(to_tensor(s), to_tensor(t));
  });
  m.def("total_loss", [](double rcnn, double object, double block, double global,
                         double w_o, double w_b, double w_g) {
    return total_loss({rcnn, object, block, global}, {w_o, w_b, w_g});
  }, py::arg("rcnn"), py::arg("object"), py::arg("block"), py::arg("global_"),
     py::arg("w_o") = 0.5, py::arg("w_b") = 0.25, py::arg("w_g") = 0.25);

  m.def("read_container", [](const std::filesystem::path& p) {
    py::dict out;
    const TensorContainer c = read_container(p);
    for (const auto& e : c.entries()) out[py::str(e.name)] = to_array(e.tensor);
    return out;
  });
  m.def(
      "write_container",
      [](const std::filesystem::path& p, const std::vector<std::pair<std::string, Array>>& items,
         const std::string& dtype) {
        check(dtype == "f64" || dtype == "f32", ErrorKind::kConfig, "dtype must be f64 or f32");
        TensorContainer c;
        for (const auto& [name, a] : items) {
          c.add(name, to_tensor(a), dtype == "f32" ? DType::kF32 : DType::kF64);
        }
        write_container(p, c);
      },
      py::arg("path"), py::arg("entries"), py::arg("dtype") = "f64");

  m.def(
      "write_synthetic_dataset",
      [](const std::filesystem::path& dir, std::size_t images, std::size_t base, std::size_t novel,
         std::size_t objects, std::uint64_t seed) {
        SynthOptions o;
        o.images = images;
        o.base = base;
        o.novel = novel;
        o.objects = objects;
        o.seed = seed;
        write_synthetic_dataset(dir, o);
      },
      py::arg("dir"), py::arg("images") = 4, py::arg("base") = 3, py::arg("novel") = 2,
      py::arg("objects") = 3, py::arg("seed") = 0);

  const auto config_of = [](const std::optional<std::filesystem::path>& p) {
    return p ? read_run_config(*p) : RunConfig{};
  };
  m.def(
      "run_oake",
      [config_of](const std::filesystem::path& manifest, const std::filesystem::path& weights,
                  const std::filesystem::path& out, std::optional<std::filesystem::path> config) {
        OakeSummary s;
        write_container(out, run_oake(read_manifest(manifest), load_weights(weights),
                                      config_of(config), &s));
        return py::dict(py::arg("images") = s.images, py::arg("proposals") = s.proposals,
                        py::arg("skipped") = s.skipped);
      },
      py::arg("manifest"), py::arg("weights"), py::arg("out"), py::arg("config") = py::none());
  m.def(
      "run_pl",
      [config_of](const std::filesystem::path& manifest, const std::filesystem::path& weights,
                  const std::filesystem::path& table, const std::filesystem::path& out,
                  std::optional<std::filesystem::path> config) {
        const CategoryTable t = read_category_table(table);
        write_file_atomic(out, pl_records_to_jsonl(
                                   run_pl(read_manifest(manifest), load_weights(weights), t,
                                          config_of(config)),
                                   t));
      },
      py::arg("manifest"), py::arg("weights"), py::arg("table"), py::arg("out"),
      py::arg("config") = py::none());
  m.def(
      "run_eval",
      [](const std::filesystem::path& pl, const std::filesystem::path& manifest) {
        return json_to_dict(run_eval(read_pl_file(pl), read_manifest(manifest)));
      },
      py::arg("pl"), py::arg("manifest"));
}
