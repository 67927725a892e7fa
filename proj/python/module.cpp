#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "splat/conditions.hpp"
#include "splat/image.hpp"
#include "splat/runner.hpp"

namespace py = pybind11;

namespace {

int run_args(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.push_back("splathead");
  for (const auto& a : args) full.push_back(a);
  std::vector<char*> argv;
  argv.reserve(full.size());
  for (auto& s : full) argv.push_back(s.data());
  return splat::run_cli(static_cast<int>(argv.size()), argv.data());
}

py::array_t<double> image_dump_to_array(const std::string& path) {
  splat::Image img = splat::read_image_dump(path);
  py::array_t<double> out({img.height, img.width, 3});
  auto r = out.mutable_unchecked<3>();
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) r(y, x, c) = img.at(y, x, c);
  return out;
}

py::tuple feature_file_to_array(const std::string& path) {
  splat::AudioFeatureSequence seq = splat::read_feature_file(path);
  py::array_t<double> out({seq.features.rows, seq.features.cols});
  auto r = out.mutable_unchecked<2>();
  for (int64_t t = 0; t < seq.features.rows; ++t)
    for (int64_t f = 0; f < seq.features.cols; ++f) r(t, f) = seq.features(t, f);
  return py::make_tuple(out, seq.fps);
}

std::vector<py::dict> gradcheck_rows(uint64_t seed) {
  std::vector<py::dict> rows;
  for (const auto& row : splat::run_gradcheck(seed)) {
    py::dict d;
    d["module"] = row.module;
    d["max_rel_err"] = row.max_rel_err;
    d["tolerance"] = row.tolerance;
    d["probes"] = row.probes;
    d["worst_param"] = row.worst_param;
    d["pass"] = row.pass;
    rows.push_back(d);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "audio-driven Gaussian-splatting talking-head toolkit";
  m.attr("__version__") = "0.1.0";
  m.def("run", &run_args, py::arg("args"),
        "Dispatch a CLI invocation in-process; returns the exit code.");
  m.def("read_image_dump", &image_dump_to_array, py::arg("path"),
        "Load a raw float image dump as an (h, w, 3) float64 array.");
  m.def("read_feature_file", &feature_file_to_array, py::arg("path"),
        "Load an audio feature file; returns ((t, f) array, fps).");
  m.def("gradcheck", &gradcheck_rows, py::arg("seed") = 7,
        "Run the finite-difference gradient suite; returns per-module dicts.");
}
