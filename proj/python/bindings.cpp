/*
 * Copyright 2026 The ncadiff Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ncadiff/checkpoint.hpp"
#include "ncadiff/cli.hpp"
#include "ncadiff/config.hpp"
#include "ncadiff/errors.hpp"
#include "ncadiff/gradcheck.hpp"
#include "ncadiff/metrics.hpp"

namespace py = pybind11;
using namespace ncadiff;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor<float>& t) {
  FloatArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

class Model {
 public:
  Model(RunConfig config, ModelParams<float> params) : config_(std::move(config)), params_(std::move(params)) {}

  static Model create(const std::string& config_text, const ConfigOverrides& overrides) {
    auto config = parse_config(config_text, overrides);
    auto params = ModelParams<float>::create(config.model, config.seed);
    return Model(std::move(config), std::move(params));
  }

  static Model load(const std::filesystem::path& path, const ConfigOverrides& overrides) {
    auto ck = load_checkpoint(path, overrides);
    return Model(std::move(ck.config), std::move(ck.params));
  }

  void save(const std::filesystem::path& path) const { save_checkpoint(path, config_, params_); }

  py::tuple predict_noise(const FloatArray& image, const FloatArray& x_t, int t, std::uint64_t seed) const {
    RandomStream rng(seed);
    Prediction<float> pred;
    {
      py::gil_scoped_release release;
      pred = ncadiff::predict_noise(params_, to_tensor(image), to_tensor(x_t), t, config_.timesteps, rng);
    }
    return py::make_tuple(to_array(pred.eps_hat), to_array(pred.rgb_out));
  }

  py::tuple infer(const FloatArray& image, std::size_t runs, std::uint64_t seed) const {
    const auto sched = make_schedule(config_.timesteps, config_.beta_start, config_.beta_end);
    EnsembleResult result;
    {
      py::gil_scoped_release release;
      result = ensemble_infer(model_predictor(params_, config_.timesteps), to_tensor(image), sched,
                              RandomStream(seed), runs, config_.threads);
    }
    return py::make_tuple(to_array(result.mask), to_array(result.mean_map));
  }

  py::dict parameters() const {
    py::dict out;
    for (const auto& [name, t] : params_.named_parameters()) out[py::str(name)] = to_array(t);
    return out;
  }

  std::string config_text() const { return serialize_config(config_); }
  std::size_t parameter_count() const { return params_.parameter_count(); }
  std::string variant() const { return std::string(variant_name(config_.model.variant)); }

 private:
  RunConfig config_;
  ModelParams<float> params_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "NCA-based diffusion segmentation engine";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());

  py::class_<Model>(m, "Model")
      .def_static("create", &Model::create, py::arg("config") = "", py::arg("overrides") = ConfigOverrides{},
                  "Fresh model from config text plus (key, value) overrides.")
      .def_static("load", &Model::load, py::arg("path"), py::arg("overrides") = ConfigOverrides{})
      .def("save", &Model::save, py::arg("path"))
      .def("predict_noise", &Model::predict_noise, py::arg("image"), py::arg("x_t"), py::arg("t"),
           py::arg("seed") = 0, "Returns (eps_hat [1,H,W], rgb_out [3,H,W]).")
      .def("infer", &Model::infer, py::arg("image"), py::arg("runs") = 10, py::arg("seed") = 0,
           "Ensemble segmentation; returns (mask, mean_map).")
      .def("parameters", &Model::parameters)
      .def_property_readonly("config", &Model::config_text)
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("variant", &Model::variant);

  m.def(
      "parameter_count",
      [](const std::string& config_text, const ConfigOverrides& overrides) {
        return ncadiff::parameter_count(parse_config(config_text, overrides).model);
      },
      py::arg("config") = "", py::arg("overrides") = ConfigOverrides{});

  m.def(
      "synth_dataset",
      [](std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed) {
        py::list out;
        for (const auto& s : ncadiff::synth_dataset(count, height, width, seed)) {
          out.append(py::make_tuple(to_array(s.image), to_array(s.mask), s.id));
        }
        return out;
      },
      py::arg("count"), py::arg("height"), py::arg("width"), py::arg("seed") = 0,
      "List of (image [3,H,W] in [-1,1], mask [1,H,W] in {-1,1}, id).");

  m.def(
      "schedule",
      [](int steps, double beta_start, double beta_end) {
        const auto s = make_schedule(steps, beta_start, beta_end);
        py::dict out;
        out["beta"] = s.beta;
        out["alpha"] = s.alpha;
        out["alpha_bar"] = s.alpha_bar;
        return out;
      },
      py::arg("steps"), py::arg("beta_start") = kDefaultBetaStart, py::arg("beta_end") = kDefaultBetaEnd);

  m.def(
      "dice_iou",
      [](const FloatArray& prediction, const FloatArray& truth) {
        const auto o = ncadiff::dice_iou(to_tensor(prediction), to_tensor(truth));
        return py::make_tuple(o.dice, o.iou);
      },
      py::arg("prediction"), py::arg("truth"));

  m.def(
      "gradcheck",
      [](const std::string& variant, std::uint64_t seed) {
        GradcheckReport report;
        {
          py::gil_scoped_release release;
          report = gradcheck_model(gradcheck_config(parse_variant(variant)), seed);
        }
        return py::make_tuple(report.passed, report.max_rel_error);
      },
      py::arg("variant"), py::arg("seed") = 0, "Returns (passed, max relative error).");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = ncadiff::run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a command-line invocation in-process; returns (exit code, stdout, stderr).");
}
