#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "onebev/dataset_stats.hpp"
#include "onebev/errors.hpp"
#include "onebev/gradient_suite.hpp"
#include "onebev/kernels.hpp"
#include "onebev/metrics.hpp"
#include "onebev/mvt.hpp"
#include "onebev/rig.hpp"
#include "onebev/scan.hpp"
#include "onebev/stitcher.hpp"
#include "onebev/synthetic.hpp"

namespace py = pybind11;
using namespace onebev;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F64Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.ptr(), t.ptr() + t.size(), out.mutable_data());
  return out;
}

Image to_image(const U8Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ValidationError("expected an HxWx3 uint8 array");
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), 3);
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

py::array_t<std::uint8_t> image_to_numpy(const Image& img) {
  py::array_t<std::uint8_t> out({img.height, img.width, img.channels});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

LabelRaster to_labels(const U8Array& a) {
  if (a.ndim() != 2) throw ValidationError("expected an HxW uint8 label array");
  return LabelRaster(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                     std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

std::vector<LabelRaster> to_frames(const std::vector<U8Array>& frames) {
  std::vector<LabelRaster> out;
  for (const auto& f : frames) out.push_back(to_labels(f));
  return out;
}

AngularGrid grid_of(int width, int height, double vfov_deg) {
  AngularGrid g;
  g.width = width;
  g.height = height;
  g.v_half_fov = deg2rad(vfov_deg / 2.0);
  return g;
}

}  // namespace

PYBIND11_MODULE(_onebev, m) {
  m.doc() = "Panorama stitching, dataset statistics and the desk-scale BEV model";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<CameraSpec>(m, "CameraSpec")
      .def_readonly("name", &CameraSpec::name)
      .def_readonly("order_index", &CameraSpec::order_index)
      .def_readonly("width", &CameraSpec::width)
      .def_readonly("height", &CameraSpec::height)
      .def_property_readonly("yaw_deg", [](const CameraSpec& c) { return rad2deg(c.orientation.yaw); })
      .def_property_readonly("fov_deg", [](const CameraSpec& c) { return rad2deg(c.fov); });

  py::class_<Rig>(m, "Rig")
      .def_readonly("cameras", &Rig::cameras)
      .def_property_readonly("origin_mm", [](const Rig& r) {
        return std::vector<double>{r.origin_mm.x(), r.origin_mm.y(), r.origin_mm.z()};
      })
      .def("to_json", &rig_to_json);
  m.def("load_rig", [](const std::string& path) { return load_rig(path); }, py::arg("path"));
  m.def("parse_rig", &parse_rig, py::arg("json_text"));

  py::class_<RemapTable>(m, "RemapTable")
      .def_readonly("height", &RemapTable::height)
      .def_readonly("width", &RemapTable::width)
      .def("invalid_count", &RemapTable::invalid_count)
      .def("camera_ids",
           [](const RemapTable& t) {
             py::array_t<std::int16_t> out({t.height, t.width});
             auto* p = out.mutable_data();
             for (const auto& e : t.entries) *p++ = e.camera_id;
             return out;
           })
      .def("source_coords",
           [](const RemapTable& t) {
             py::array_t<float> out({t.height, t.width, 2});
             auto* p = out.mutable_data();
             for (const auto& e : t.entries) {
               *p++ = e.src_u;
               *p++ = e.src_v;
             }
             return out;
           })
      .def("to_bytes",
           [](const RemapTable& t) {
             const auto b = serialize_remap(t);
             return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
           })
      .def("__eq__", [](const RemapTable& a, const RemapTable& b) { return a == b; });

  m.def(
      "build_remap_table",
      [](const Rig& rig, int width, int height, double vfov_deg, const std::string& overlap, int jobs) {
        RemapOptions o{grid_of(width, height, vfov_deg), OverlapPolicy::Nearest, jobs};
        if (overlap == "order") {
          o.policy = OverlapPolicy::Order;
        } else if (overlap != "nearest") {
          throw ValidationError("overlap must be 'nearest' or 'order'");
        }
        py::gil_scoped_release release;
        return build_remap_table(rig, o);
      },
      py::arg("rig"), py::arg("width") = 9600, py::arg("height") = 600, py::arg("vfov_deg") = 50.0,
      py::arg("overlap") = "nearest", py::arg("jobs") = 1);
  m.def("save_remap", [](const std::string& path, const RemapTable& t) { save_remap(path, t); });
  m.def("load_remap", [](const std::string& path) { return load_remap(path); });

  m.def(
      "stitch",
      [](const std::map<int, U8Array>& images, const RemapTable& table, int jobs) {
        std::map<int, Image> imgs;
        for (const auto& [id, a] : images) imgs.emplace(id, to_image(a));
        return image_to_numpy(stitch(imgs, table, jobs));
      },
      py::arg("images"), py::arg("table"), py::arg("jobs") = 1);
  m.def(
      "render_rig_views",
      [](const Rig& rig) {
        std::map<int, py::array_t<std::uint8_t>> out;
        for (const auto& [id, img] : render_rig_views(rig)) out.emplace(id, image_to_numpy(img));
        return out;
      },
      py::arg("rig"));
  m.def(
      "render_equirect",
      [](int width, int height, double vfov_deg) { return image_to_numpy(render_equirect(grid_of(width, height, vfov_deg))); },
      py::arg("width"), py::arg("height"), py::arg("vfov_deg") = 50.0);

  m.def(
      "selective_scan",
      [](const F64Array& u, const F64Array& delta, const F64Array& a, const F64Array& b, const F64Array& c,
         const F64Array& d, const std::string& algorithm, std::size_t chunk) {
        const Tensor tu = to_tensor(u), tdt = to_tensor(delta), ta = to_tensor(a), tb = to_tensor(b),
                     tc = to_tensor(c), td = to_tensor(d);
        ScanOptions o;
        o.chunk = chunk;
        if (algorithm == "sequential") {
          o.algorithm = ScanAlgorithm::Sequential;
        } else if (algorithm != "chunked") {
          throw ValidationError("algorithm must be 'sequential' or 'chunked'");
        }
        return to_numpy(selective_scan_forward({tu, tdt, ta, tb, tc, td}, o).y);
      },
      py::arg("u"), py::arg("delta"), py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"),
      py::arg("algorithm") = "chunked", py::arg("chunk") = 64);
  m.def(
      "focal_loss",
      [](const F64Array& logits, const std::vector<int>& targets, double gamma, std::vector<double> alpha) {
        const Tensor t = to_tensor(logits);
        if (alpha.empty()) alpha.assign(t.rank() == 2 ? t.dim(1) : 0, 1.0);
        return kernels::focal_loss(t, targets, gamma, alpha);
      },
      py::arg("logits"), py::arg("targets"), py::arg("gamma") = 2.0, py::arg("alpha") = std::vector<double>{});
  m.def(
      "bilinear_sample",
      [](const F64Array& feature, const F64Array& coords) {
        return to_numpy(kernels::bilinear_sample(to_tensor(feature), to_tensor(coords)));
      },
      py::arg("feature"), py::arg("coords"));

  m.def(
      "iou",
      [](const U8Array& pred, const U8Array& gt, int class_id) { return iou(to_labels(pred), to_labels(gt), class_id); },
      py::arg("pred"), py::arg("gt"), py::arg("class_id"));
  m.def(
      "miou",
      [](const std::vector<U8Array>& preds, const std::vector<U8Array>& gts, const std::vector<int>& classes) {
        if (preds.size() != gts.size()) throw ValidationError("miou: prediction and ground-truth counts differ");
        ConfusionAccumulator acc(classes);
        for (std::size_t i = 0; i < preds.size(); ++i) acc.add(to_labels(preds[i]), to_labels(gts[i]));
        return miou(acc);
      },
      py::arg("preds"), py::arg("gts"), py::arg("classes"));

  py::class_<ClassTable>(m, "ClassTable").def("target_classes", &ClassTable::target_classes);
  m.def("load_class_table", [](const std::string& path) { return load_class_table(path); });
  m.def("parse_class_table", &parse_class_table);
  m.def(
      "pixel_ratio",
      [](const std::vector<U8Array>& frames, const ClassTable& table, int class_id) {
        const auto f = to_frames(frames);
        return pixel_ratio(std::span<const LabelRaster>(f), table, class_id);
      },
      py::arg("frames"), py::arg("table"), py::arg("class_id"));
  m.def(
      "presence_ratio",
      [](const std::vector<U8Array>& frames, const ClassTable& table, int class_id, std::uint64_t min_pixels) {
        const auto f = to_frames(frames);
        return presence_ratio(std::span<const LabelRaster>(f), table, class_id, min_pixels);
      },
      py::arg("frames"), py::arg("table"), py::arg("class_id"), py::arg("min_pixels") = 2);

  py::class_<MvtConfig>(m, "MvtConfig")
      .def_static("paper", &MvtConfig::paper)
      .def_static("toy", &MvtConfig::toy)
      .def_static("from_json", &parse_mvt_config)
      .def("to_json", &mvt_config_to_json)
      .def_readwrite("emb_dims", &MvtConfig::emb_dims)
      .def_readwrite("layers", &MvtConfig::layers)
      .def_readwrite("locs", &MvtConfig::locs)
      .def_readwrite("points", &MvtConfig::points)
      .def_readwrite("vss_depth", &MvtConfig::vss_depth)
      .def_readwrite("query_h", &MvtConfig::query_h)
      .def_readwrite("query_w", &MvtConfig::query_w)
      .def_readwrite("out_h", &MvtConfig::out_h)
      .def_readwrite("out_w", &MvtConfig::out_w)
      .def_readwrite("num_classes", &MvtConfig::num_classes)
      .def_readwrite("state_dim", &MvtConfig::state_dim)
      .def_readwrite("encoder_stride", &MvtConfig::encoder_stride)
      .def_readwrite("seed", &MvtConfig::seed);

  py::class_<MvtModel>(m, "MvtModel")
      .def(py::init(&MvtModel::init), py::arg("config"))
      .def_readonly("config", &MvtModel::cfg)
      .def("parameter_count", &MvtModel::parameter_count)
      .def("mvt_parameter_count", &MvtModel::mvt_parameter_count)
      .def("forward",
           [](const MvtModel& model, const F64Array& image) {
             const Tensor t = to_tensor(image);
             Tensor logits;
             {
               py::gil_scoped_release release;
               const NoGradGuard no_grad;
               logits = forward(model, Var::constant(t)).value();
             }
             return to_numpy(logits);
           })
      .def("save", [](const MvtModel& model, const std::string& stem) { save_checkpoint(model, stem); });
  m.def("load_model", [](const std::string& stem) { return load_checkpoint(stem); });

  m.def(
      "gradient_suite",
      [](std::uint64_t seed, double eps) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& c : run_gradient_suite(seed, eps)) out.emplace_back(c.name, c.result.max_rel_error);
        return out;
      },
      py::arg("seed") = 0, py::arg("eps") = 1e-5);
}
