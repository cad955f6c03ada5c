// Python bindings for the main operations: config handling, cost accounting,
// image metrics, super-resolution inference, and the full CLI entry point.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "himosa/cli.hpp"
#include "himosa/config.hpp"
#include "himosa/data.hpp"
#include "himosa/image.hpp"
#include "himosa/metrics.hpp"
#include "himosa/model.hpp"
#include "himosa/tensor.hpp"
#include "himosa/trainer.hpp"

namespace py = pybind11;
using namespace himosa;

namespace {

using ByteArray =
    py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;

ImageBuffer to_image(const ByteArray& arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3) {
    throw std::invalid_argument("expected a uint8 array of shape (h, w, 3)");
  }
  ImageBuffer img = make_image(arr.shape(1), arr.shape(0));
  std::memcpy(img.data.data(), arr.data(), img.data.size());
  return img;
}

py::array_t<uint8_t> from_image(const ImageBuffer& img) {
  py::array_t<uint8_t> arr(
      {static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width),
       static_cast<py::ssize_t>(3)});
  std::memcpy(arr.mutable_data(), img.data.data(), img.data.size());
  return arr;
}

py::array_t<uint8_t> upscale(const std::string& checkpoint, const ByteArray& lr,
                             const RunConfig* config) {
  ImageBuffer img = to_image(lr);
  ImageBuffer sr;
  {
    py::gil_scoped_release release;
    const TrainState st = load_checkpoint(checkpoint, config);
    NoGradGuard guard;
    sr = tensor_to_image(himosa_forward(image_to_tensor(img), st.weights));
  }
  return from_image(sr);
}

}  // namespace

PYBIND11_MODULE(_himosa, m) {
  m.doc() = "Hierarchical mixture-of-sparse-attention super-resolution";
  m.attr("__version__") = "0.1.0";

  py::class_<RunConfig>(m, "Config")
      .def_property_readonly(
          "n_blocks", [](const RunConfig& c) { return c.model.n_blocks; })
      .def_property_readonly(
          "n_layers", [](const RunConfig& c) { return c.model.n_layers; })
      .def_property_readonly(
          "channels", [](const RunConfig& c) { return c.model.channels; })
      .def_property_readonly(
          "n_experts", [](const RunConfig& c) { return c.model.n_experts; })
      .def_property_readonly(
          "scale", [](const RunConfig& c) { return c.model.scale; })
      .def_property_readonly(
          "total_iters", [](const RunConfig& c) { return c.train.total_iters; })
      .def("text", &serialize_config,
           "Serialize back to the key = value file format.")
      .def("__repr__", [](const RunConfig& c) {
        std::ostringstream s;
        s << "Config(blocks=" << c.model.n_blocks
          << ", layers=" << c.model.n_layers
          << ", channels=" << c.model.channels
          << ", experts=" << c.model.n_experts << ", scale=" << c.model.scale
          << ")";
        return s.str();
      });

  m.def("parse_config", &parse_config, py::arg("text"),
        "Parse a config from its file text; unknown keys are errors.");
  m.def("load_config", &load_config, py::arg("path"));

  m.def("count_params", [](const RunConfig& c) { return count_params(c.model); },
        py::arg("config"), "Exact trainable-parameter count.");
  m.def(
      "flops_report",
      [](const RunConfig& c, int64_t h, int64_t w) {
        return count_flops(c.model, h, w).text();
      },
      py::arg("config"), py::arg("h"), py::arg("w"),
      "Per-stage cost table for one forward pass at the given LR extents.");

  m.def(
      "psnr",
      [](const ByteArray& a, const ByteArray& b, int64_t border) {
        return psnr(to_image(a), to_image(b), border);
      },
      py::arg("a"), py::arg("b"), py::arg("border") = 0,
      "RGB PSNR in dB; +inf for identical inputs.");
  m.def("format_psnr", &format_psnr, py::arg("db"));
  m.def(
      "ssim",
      [](const ByteArray& a, const ByteArray& b, int64_t border) {
        return ssim(to_image(a), to_image(b), border);
      },
      py::arg("a"), py::arg("b"), py::arg("border") = 0,
      "Mean grayscale SSIM, 11x11 Gaussian window.");

  m.def(
      "bicubic_downsample",
      [](const ByteArray& img, int64_t factor) {
        return from_image(bicubic_downsample(to_image(img), factor));
      },
      py::arg("img"), py::arg("factor"));
  m.def(
      "load_image",
      [](const std::string& path) { return from_image(load_image(path)); },
      py::arg("path"));
  m.def(
      "save_image",
      [](const ByteArray& img, const std::string& path) {
        save_image(to_image(img), path);
      },
      py::arg("img"), py::arg("path"));

  m.def("upscale", &upscale, py::arg("checkpoint"), py::arg("lr"),
        py::arg("config") = nullptr,
        "Run super-resolution on an (h, w, 3) uint8 array using a trained\n"
        "checkpoint. When config is given, its runtime settings win and the\n"
        "checkpoint tensors must match its shapes.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"),
      "Invoke the command-line interface in-process; returns\n"
      "(exit_code, stdout, stderr).");
}
