// Python bindings: configuration, the staged pipeline, .flo files and a few
// pure functions that are handy from notebooks.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstring>

#include "lfv/eval.hpp"
#include "lfv/features.hpp"
#include "lfv/io.hpp"
#include "lfv/keyframes.hpp"
#include "lfv/pipeline.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

template <typename T, typename Out = T>
py::array_t<Out> to_array(const lfv::Grid<T>& g) {
  py::array_t<Out> a({g.height(), g.width()});
  std::copy(g.data().begin(), g.data().end(), a.mutable_data());
  return a;
}

void check_shape(const py::array& a, py::ssize_t h, py::ssize_t w, const char* name) {
  if (a.ndim() != 2 || a.shape(0) != h || a.shape(1) != w)
    throw lfv::Error(lfv::ErrorCode::InvalidArgument, std::string(name) + " must have shape (height, width)");
}

lfv::Stage stage_arg(const std::string& name) {
  const auto s = lfv::stage_from_name(name);
  if (!s) throw lfv::Error(lfv::ErrorCode::ConfigError, "unknown stage '" + name + "'");
  return *s;
}

py::dict report_dict(const lfv::StageReport& r) {
  py::dict d;
  d["stage"] = lfv::stage_name(r.stage);
  d["skipped"] = r.skipped;
  d["seconds"] = r.seconds;
  return d;
}

lfv::FeatureSet feature_set(const FloatArray& descriptors) {
  if (descriptors.ndim() != 2 || descriptors.shape(1) != lfv::kDescriptorSize)
    throw lfv::Error(lfv::ErrorCode::InvalidArgument, "descriptors must have shape (n, 128)");
  lfv::FeatureSet s;
  s.features.resize(static_cast<std::size_t>(descriptors.shape(0)));
  for (std::size_t i = 0; i < s.features.size(); ++i) {
    std::memcpy(s.features[i].descriptor.data(), descriptors.data(static_cast<py::ssize_t>(i), 0),
                sizeof(lfv::Descriptor));
    s.features[i].point_id = static_cast<std::int64_t>(i);
  }
  return s;
}

}  // namespace

PYBIND11_MODULE(_lfv, m) {
  m.doc() = "Light-field video temporal coherence pipeline";
  m.attr("__version__") = lfv::kVersion;

  // Held for the lifetime of the interpreter.
  static py::handle error_type = py::exception<lfv::Error>(m, "LfvError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const lfv::Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = lfv::to_string(e.code());
      exc.attr("exit_code") = lfv::exit_code_for(e.code());
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def("default_config", [] { return lfv::config_to_json(lfv::default_config()); },
        "Default configuration as JSON text.");
  m.def("normalize_config", [](const std::string& text) { return lfv::config_to_json(lfv::config_from_json(text)); },
        py::arg("text"), "Validates JSON config text and returns it with every default filled in.");
  m.def("config_hash", [](const std::string& text) { return lfv::config_hash(lfv::config_from_json(text)); },
        py::arg("text"));
  m.def("stages", [] {
    std::vector<std::string> out;
    for (lfv::Stage s : lfv::all_stages()) out.push_back(lfv::stage_name(s));
    return out;
  });

  py::class_<lfv::Pipeline>(m, "Pipeline")
      .def(py::init([](const std::string& config_json, const std::string& views, const std::string& debug_dir) {
             lfv::DebugOptions debug;
             debug.dir = debug_dir;
             return lfv::Pipeline(lfv::config_from_json(config_json), views, debug);
           }),
           py::arg("config_json"), py::arg("views") = "", py::arg("debug_dir") = "")
      .def(
          "run", [](lfv::Pipeline& p, const std::string& stage) { return report_dict(p.run(stage_arg(stage))); },
          py::arg("stage"), py::call_guard<py::gil_scoped_release>())
      .def(
          "run_through",
          [](lfv::Pipeline& p, const std::string& stage) {
            const auto reports = p.run_through(stage_arg(stage));
            py::gil_scoped_acquire gil;
            py::list out;
            for (const auto& r : reports) out.append(report_dict(r));
            return out;
          },
          py::arg("stage") = "eval", py::call_guard<py::gil_scoped_release>())
      .def("stage_dir", [](const lfv::Pipeline& p, const std::string& stage) { return p.stage_dir(stage_arg(stage)).string(); },
           py::arg("stage"));

  m.def(
      "read_flow",
      [](const std::string& path) {
        const lfv::FlowField f = lfv::read_flow(path);
        return py::make_tuple(to_array(f.u), to_array(f.v), to_array<std::uint8_t, bool>(f.valid));
      },
      py::arg("path"), "Reads a .flo file as (u, v, valid) arrays of shape (height, width).");
  m.def(
      "write_flow",
      [](const std::string& path, const FloatArray& u, const FloatArray& v, const BoolArray& valid) {
        if (u.ndim() != 2) throw lfv::Error(lfv::ErrorCode::InvalidArgument, "u must be 2-D");
        const py::ssize_t h = u.shape(0), w = u.shape(1);
        check_shape(v, h, w, "v");
        check_shape(valid, h, w, "valid");
        lfv::FlowField f(static_cast<int>(w), static_cast<int>(h));
        std::copy(u.data(), u.data() + u.size(), f.u.data().begin());
        std::copy(v.data(), v.data() + v.size(), f.v.data().begin());
        std::copy(valid.data(), valid.data() + valid.size(), f.valid.data().begin());
        lfv::write_flow(f, path);
      },
      py::arg("path"), py::arg("u"), py::arg("v"), py::arg("valid"));

  m.def(
      "match_features",
      [](const FloatArray& a, const FloatArray& b, double ratio) {
        const lfv::MatchSet ms = lfv::match_features(feature_set(a), feature_set(b), ratio);
        std::vector<std::tuple<std::size_t, std::size_t, double>> out;
        for (const auto& mt : ms.matches) out.emplace_back(mt.a, mt.b, mt.distance);
        return out;
      },
      py::arg("a"), py::arg("b"), py::arg("ratio") = 0.85,
      "Mutual ratio-test matches between two (n, 128) descriptor arrays as (i, j, distance).");

  m.def("appearance_metric", py::overload_cast<std::size_t, std::size_t, std::size_t>(&lfv::appearance_metric),
        py::arg("matches"), py::arg("features_i"), py::arg("features_j"));
  m.def("distance_metric", &lfv::distance_metric, py::arg("i"), py::arg("j"), py::arg("d_max") = 100);
  m.def(
      "frame_similarity",
      [](const std::vector<std::tuple<double, double, double>>& views) {
        std::vector<lfv::ViewMetrics> vm;
        for (const auto& [a, l, s] : views) vm.push_back({a, l, s});
        return lfv::frame_similarity(vm);
      },
      py::arg("views"), "Fused dissimilarity from per-view (M, L, I) triples.");
  m.def(
      "silhouette_overlap_error",
      [](const std::vector<BoolArray>& propagated, const std::vector<BoolArray>& reference) {
        auto masks = [](const std::vector<BoolArray>& in) {
          std::vector<lfv::Mask> out;
          for (const auto& a : in) {
            if (a.ndim() != 2) throw lfv::Error(lfv::ErrorCode::InvalidArgument, "masks must be 2-D");
            lfv::Mask mk(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), 0);
            std::copy(a.data(), a.data() + a.size(), mk.data().begin());
            out.push_back(std::move(mk));
          }
          return out;
        };
        const lfv::SoeResult r = lfv::silhouette_overlap_error(masks(propagated), masks(reference));
        py::dict d;
        d["ratio"] = r.ratio;
        d["soe_error"] = r.soe_error;
        d["pairs"] = r.pairs;
        d["skipped_empty"] = r.skipped_empty;
        return d;
      },
      py::arg("propagated"), py::arg("reference"));
}
