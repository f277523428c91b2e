#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>
#include <string>
#include <vector>

#include "quads/cli.hpp"
#include "quads/dsp.hpp"
#include "quads/error.hpp"
#include "quads/metrics.hpp"
#include "quads/model_io.hpp"
#include "quads/quantizer.hpp"

namespace py = pybind11;
using namespace quads;

PYBIND11_MODULE(_quads, m) {
  m.doc() = "Distillation and codebook quantization toolkit";

  py::register_exception<Error>(m, "QuadsError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<dsp::MelConfig>(m, "MelConfig")
      .def(py::init<>())
      .def_readwrite("sample_rate", &dsp::MelConfig::sample_rate)
      .def_readwrite("n_mels", &dsp::MelConfig::n_mels)
      .def_readwrite("window_ms", &dsp::MelConfig::window_ms)
      .def_readwrite("hop_ms", &dsp::MelConfig::hop_ms)
      .def_readwrite("fmin", &dsp::MelConfig::fmin)
      .def_readwrite("fmax", &dsp::MelConfig::fmax)
      .def_readwrite("log_floor", &dsp::MelConfig::log_floor);

  // Returns (n_mels, frames, row-major values).
  m.def(
      "log_mel",
      [](const std::vector<double>& wave, const dsp::MelConfig& cfg) {
        auto s = dsp::log_mel(wave, cfg);
        return py::make_tuple(s.n_mels, s.frames, std::move(s.values));
      },
      py::arg("wave"), py::arg("config") = dsp::MelConfig());
  m.def("mel_center_frequencies", &dsp::mel_center_frequencies, py::arg("config") = dsp::MelConfig());

  py::class_<LayerCodebook>(m, "LayerCodebook")
      .def(py::init<>())
      .def_readwrite("bit_length", &LayerCodebook::bit_length)
      .def_readwrite("centroids", &LayerCodebook::centroids)
      .def_readwrite("indices", &LayerCodebook::indices)
      .def("reconstruct", [](const LayerCodebook& cb) {
        const auto t = reconstruct(cb, {cb.indices.size()});
        return std::vector<double>(t.data().begin(), t.data().end());
      });

  m.def(
      "kmeans_fit",
      [](const std::vector<double>& w, int bits, int max_iters, std::uint64_t seed, int restarts) {
        return kmeans_fit(w, bits, max_iters, seed, restarts);
      },
      py::arg("weights"), py::arg("bit_length"), py::arg("max_iters") = 100, py::arg("seed") = 0,
      py::arg("restarts") = 3);
  m.def(
      "codebook_sse", [](const std::vector<double>& w, const LayerCodebook& cb) { return codebook_sse(w, cb); },
      py::arg("weights"), py::arg("codebook"));
  m.def(
      "centroid_gradient",
      [](const std::vector<double>& g, const std::vector<std::uint32_t>& idx, std::size_t k) {
        return centroid_gradient(g, idx, k);
      },
      py::arg("weight_grad"), py::arg("indices"), py::arg("k"));

  m.def("model_size_mb", &model_size_mb, py::arg("param_count"), py::arg("bit_length"));
  m.def(
      "accuracy",
      [](const std::vector<std::size_t>& p, const std::vector<std::size_t>& l) { return accuracy(p, l); },
      py::arg("preds"), py::arg("labels"));
  m.def(
      "macro_f1",
      [](const std::vector<std::size_t>& p, const std::vector<std::size_t>& l, std::size_t n) {
        return macro_f1(p, l, n);
      },
      py::arg("preds"), py::arg("labels"), py::arg("n_classes"));

  // Summary of a packed model: bit length, parameter count, per-layer storage.
  m.def(
      "inspect_model",
      [](const std::filesystem::path& path) {
        const auto loaded = io::load_packed(path);
        py::dict layers;
        for (const auto& p : loaded.model.base.parameters())
          layers[py::str(p.id)] = py::make_tuple(p.value.numel(), loaded.model.is_quantized(p.id) ? "codebook" : "fp32");
        py::dict out;
        out["bit_length"] = loaded.model.bit_length;
        out["param_count"] = loaded.model.base.param_count();
        out["n_classes"] = loaded.meta.n_classes;
        out["vocab"] = loaded.meta.vocab;
        out["layers"] = layers;
        return out;
      },
      py::arg("path"));

  // Runs the command-line tool in-process; returns (exit code, stdout, stderr).
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"quads"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
