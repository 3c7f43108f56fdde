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

#include "ncadiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ncadiff/diffusion.hpp"
#include "ncadiff/errors.hpp"
#include "ncadiff/training.hpp"

namespace ncadiff {

GradcheckReport check_gradients(const std::function<Tensor<double>()>& loss,
                                const std::vector<NamedTensor<double>>& inputs, const GradcheckOptions& options) {
  GradcheckReport report;
  std::vector<std::vector<double>> analytic;
  {
    for (const auto& in : inputs) {
      Tensor<double> t = in.tensor;
      t.set_requires_grad(true);
      t.zero_grad();
    }
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    tape.backward(loss());
    for (const auto& in : inputs) {
      const auto g = in.tensor.grad();
      analytic.emplace_back(g.begin(), g.end());
      if (g.empty()) analytic.back().assign(in.tensor.numel(), 0.0);
    }
  }

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double> t = inputs[k].tensor;
    auto v = t.values();
    TensorGradError err{inputs[k].name};
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      const double a = analytic[k][i];
      double numeric = 0.0;
      double rel = 0.0;
      double h = options.step;
      for (int attempt = 0; attempt <= options.retries; ++attempt, h *= 0.1) {
        v[i] = orig + h;
        const double up = loss().item();
        v[i] = orig - h;
        const double down = loss().item();
        v[i] = orig;
        const double n = (up - down) / (2.0 * h);
        const double r = std::abs(a - n) / std::max({std::abs(a), std::abs(n), options.floor});
        if (attempt == 0 || r < rel) {
          rel = r;
          numeric = n;
        }
        if (rel < options.tolerance) break;
      }
      if (rel > err.max_rel_error || err.checked == 0) {
        err.max_rel_error = rel;
        err.worst_index = i;
        err.analytic = a;
        err.numeric = numeric;
      }
      ++err.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, err.max_rel_error);
    report.checked += err.checked;
    report.tensors.push_back(err);
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

ModelConfig gradcheck_config(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.levels = variant_levels(variant);
  c.channels = 8;
  c.hidden = 16;
  c.n_steps = 2;
  c.downsample_factor = 2;
  c.cbam_reduction = 4;
  return c;
}

GradcheckReport gradcheck_model(const ModelConfig& config, std::uint64_t seed, const GradcheckOptions& options,
                                std::size_t size) {
  config.check_image_size(size, size);
  RandomStream rng(seed);
  auto model = ModelParams<float>::create(config, seed).cast<double>();
  RandomStream weight_rng = rng.split(0);
  for (const auto& p : model.named_parameters()) {
    Tensor<double> t = p.tensor;
    for (auto& v : t.values()) v = 0.5 * (2.0 * weight_rng.uniform() - 1.0);
  }

  const int steps = 10;
  const auto schedule = make_schedule(steps);
  RandomStream data_rng = rng.split(1);
  Tensor<double> image({3, size, size});
  for (auto& v : image.values()) v = 2.0 * data_rng.uniform() - 1.0;
  Tensor<double> mask({1, size, size});
  for (auto& v : mask.values()) v = data_rng.bernoulli(0.5) ? 1.0 : -1.0;
  const int t = 1 + static_cast<int>(data_rng.uniform_index(steps));
  const auto eps = normal_tensor<double>(mask.shape(), data_rng);
  const auto x_t = q_sample(mask, t, eps, schedule);
  const RandomStream fire_rng = rng.split(2);

  const auto loss = [&] {
    RandomStream r = fire_rng;
    const auto pred = predict_noise(model, image, x_t, t, steps, r);
    return loss_total(pred.eps_hat, eps, pred.rgb_out, mask).total;
  };
  return check_gradients(loss, model.named_parameters(), options);
}

}  // namespace ncadiff
