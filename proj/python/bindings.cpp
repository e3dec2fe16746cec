#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lcr/edge_prompt.hpp"
#include "lcr/harness.hpp"
#include "lcr/model.hpp"
#include "lcr/ops.hpp"
#include "lcr/wkv.hpp"

namespace py = pybind11;
using namespace lcr;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const Tensor& t) {
  py::array_t<double> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Image to_image(const DoubleArray& a) {
  if (a.ndim() != 3) throw DimensionError("frame must be [channels, H, W]");
  Image img(a.shape(0), a.shape(1), a.shape(2));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

py::array_t<std::uint8_t> edge_array(const EdgeMap& e) {
  py::array_t<std::uint8_t> out({static_cast<py::ssize_t>(e.height), static_cast<py::ssize_t>(e.width)});
  std::copy(e.pixels.begin(), e.pixels.end(), out.mutable_data());
  return out;
}

using WkvFn = Tensor (*)(const Tensor&, const Tensor&, const Tensor&, const Tensor&);

auto wkv_binding(WkvFn fn) {
  return [fn](const DoubleArray& k, const DoubleArray& v, const DoubleArray& w, const DoubleArray& u) {
    return to_array(fn(to_tensor(k), to_tensor(v), to_tensor(w), to_tensor(u)));
  };
}

}  // namespace

PYBIND11_MODULE(_lcr, m) {
  m.doc() = "LSTM-CrossRWKV video model core";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);

  // k, v: [T, H, D]; w (decay in (0, 1)), u: [H, D]. Result [T, H, D, D].
  m.def("wkv_recurrent", wkv_binding(static_cast<WkvFn>(wkv_recurrent)), py::arg("k"), py::arg("v"),
        py::arg("w"), py::arg("u"));
  m.def("wkv_bruteforce", wkv_binding(static_cast<WkvFn>(wkv_bruteforce)), py::arg("k"), py::arg("v"),
        py::arg("w"), py::arg("u"));
  m.def("wkv_bidirectional", [](const DoubleArray& k, const DoubleArray& v, const DoubleArray& w,
                                const DoubleArray& u) {
    return to_array(wkv_bidirectional(to_tensor(k), to_tensor(v), to_tensor(w), to_tensor(u)));
  });
  m.def("decay_from_omega", [](const DoubleArray& omega) { return to_array(decay_from_omega(to_tensor(omega))); });

  m.def("otsu_threshold", [](const std::vector<std::uint64_t>& hist) {
    if (hist.size() != 256) throw DimensionError("histogram must have 256 bins");
    Histogram256 h{};
    std::copy(hist.begin(), hist.end(), h.begin());
    return otsu_threshold(h);
  });
  m.def("adaptive_canny", [](const DoubleArray& frame) { return edge_array(adaptive_canny(to_image(frame))); },
        py::arg("frame"), "Edge map [H, W] (1 = edge) of a [channels, H, W] frame in [0, 1].");

  m.def("make_tube_mask", [](std::size_t patches, double ratio, std::uint64_t seed) {
    return make_tube_mask(patches, ratio, seed).patches;
  });

  m.def("preset_names", &ModelConfig::preset_names);
  m.def("preset_config", [](const std::string& name) { return ModelConfig::preset(name).to_key_values(); });
  m.def("param_count", [](const std::map<std::string, std::string>& kv) {
    return param_count(ModelConfig::from_key_values(kv));
  });
  m.def("param_breakdown", [](const std::map<std::string, std::string>& kv) {
    return param_breakdown(ModelConfig::from_key_values(kv)).modules;
  });
  m.def("reference_variants", [] {
    py::list rows;
    for (const auto& r : reference_variants()) rows.append(py::make_tuple(r.preset, r.params_millions, r.flops_tera));
    return rows;
  });

  py::class_<LcrModel>(m, "Model")
      .def(py::init([](const std::map<std::string, std::string>& kv, std::uint64_t seed) {
             return LcrModel::create(ModelConfig::from_key_values(kv), seed);
           }),
           py::arg("config"), py::arg("seed") = 0)
      .def_static("from_preset",
                  [](const std::string& name, std::uint64_t seed) {
                    return LcrModel::create(ModelConfig::preset(name), seed);
                  },
                  py::arg("name"), py::arg("seed") = 0)
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const LcrModel& self, const std::string& path) { save_checkpoint(self, path); })
      .def_property_readonly("config", [](const LcrModel& self) { return self.config.to_key_values(); })
      .def("parameter_count", &LcrModel::parameter_count)
      .def("parameters",
           [](const LcrModel& self) {
             py::dict out;
             for (const auto& p : self.parameters()) out[py::str(p.name)] = to_array(p.tensor);
             return out;
           })
      .def("forward",
           [](const LcrModel& self, const DoubleArray& video) {
             const Tensor input = to_tensor(video);
             Tensor logits;
             {
               py::gil_scoped_release release;
               logits = forward_video(input, self);
             }
             return to_array(logits);
           },
           py::arg("video"), "Logits for a [3, T, H, W] clip or a [B, 3, T, H, W] batch.")
      .def("stream",
           [](const LcrModel& self, const std::vector<DoubleArray>& frames) {
             // frame-at-a-time inference; returns logits and retained bytes
             FrameStream s(self, 1);
             for (const auto& f : frames) s.push(to_tensor(f));
             return py::make_tuple(to_array(reshape(s.logits(), {self.config.num_classes})), s.retained_bytes());
           },
           py::arg("frames"));

  py::class_<VideoSample>(m, "VideoSample")
      .def_readonly("label", &VideoSample::label)
      .def_property_readonly("pixels",
                             [](const VideoSample& s) {
                               py::array_t<double> out({s.frames, s.channels, s.height, s.width});
                               std::copy(s.pixels.begin(), s.pixels.end(), out.mutable_data());
                               return out;
                             })
      .def("edges", [](const VideoSample& s, std::size_t t) { return edge_array(s.edges.at(t)); });

  m.def("render_video",
        [](std::size_t motion, std::uint64_t seed, std::size_t frames, std::size_t size) {
          if (motion > 3) throw ConfigError("motion must be 0..3");
          SyntheticVideoSpec spec;
          spec.frames = frames;
          spec.height = spec.width = size;
          return render_video(static_cast<MotionClass>(motion), spec, seed);
        },
        py::arg("motion"), py::arg("seed"), py::arg("frames") = 8, py::arg("size") = 32);
  m.def("motion_name", [](std::size_t motion) { return motion_name(static_cast<MotionClass>(motion)); });

  m.def("train",
        [](LcrModel& model, const std::map<std::string, std::string>& train_kv, std::size_t samples) {
          const TrainConfig config = TrainConfig::from_key_values(train_kv, TrainConfig{});
          SyntheticVideoSpec spec;
          spec.samples = samples;
          spec.num_classes = model.config.num_classes;
          spec.frames = model.config.frames;
          spec.height = model.config.frame_height;
          spec.width = model.config.frame_width;
          py::gil_scoped_release release;
          const Dataset data = generate_dataset(spec);
          const TrainResult r = train(model, config, data);
          std::vector<std::tuple<std::size_t, double, double, double>> log;
          for (const auto& row : r.log) log.emplace_back(row.step, row.loss, row.train_acc, row.val_acc);
          return log;
        },
        py::arg("model"), py::arg("config") = std::map<std::string, std::string>{}, py::arg("samples") = 800,
        "Trains on the synthetic motion set; returns (step, loss, train_acc, val_acc) rows.");

  m.def("run_oracles", [](std::uint64_t seed) {
    std::vector<std::tuple<std::string, bool, std::string>> out;
    for (const auto& r : run_oracles(seed)) out.emplace_back(r.name, r.passed, r.detail);
    return out;
  }, py::arg("seed") = 0);
}
