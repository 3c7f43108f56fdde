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

#include "ncadiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ncadiff/errors.hpp"
#include "ncadiff/parallel.hpp"

namespace ncadiff {

Overlap dice_iou(const Tensor<float>& prediction, const Tensor<float>& truth) {
  if (prediction.shape() != truth.shape()) {
    throw ShapeError("dice_iou: " + shape_string(prediction.shape()) + " vs " + shape_string(truth.shape()));
  }
  const auto p = prediction.values();
  const auto g = truth.values();
  std::size_t inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] > 0.0f;
    const bool b = g[i] > 0.0f;
    np += a;
    ng += b;
    inter += a && b;
  }
  if (np + ng == 0) return {1.0, 1.0};
  const double i = static_cast<double>(inter);
  return {2.0 * i / static_cast<double>(np + ng), i / static_cast<double>(np + ng - inter)};
}

NoisePredictor<float> model_predictor(const ModelParams<float>& params, int timesteps) {
  return [params, timesteps](const Tensor<float>& x_t, const Tensor<float>& image, int t, RandomStream& rng) {
    return predict_noise(params, image, x_t, t, timesteps, rng).eps_hat;
  };
}

NoisePredictor<float> oracle_predictor(const Tensor<float>& x0, const NoiseSchedule& schedule) {
  return [x0, schedule](const Tensor<float>& x_t, const Tensor<float>&, int t, RandomStream&) {
    const double ab = schedule.alpha_bar_at(t);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Tensor<float> eps(x_t.shape());
    auto e = eps.values();
    const auto x = x_t.values();
    const auto z = x0.values();
    for (std::size_t i = 0; i < e.size(); ++i) {
      e[i] = static_cast<float>((static_cast<double>(x[i]) - a * static_cast<double>(z[i])) / b);
    }
    return eps;
  };
}

EnsembleResult ensemble_infer(const NoisePredictor<float>& predictor, const Tensor<float>& image,
                              const NoiseSchedule& schedule, const RandomStream& rng, std::size_t runs,
                              std::size_t threads) {
  if (runs == 0) throw ArgumentError("ensemble needs at least one run");
  if (image.rank() != 3) throw ShapeError("ensemble_infer: image must be [3,H,W]");
  std::vector<Tensor<float>> outputs(runs);
  parallel_for(runs, threads, [&](std::size_t r) {
    outputs[r] = reverse_chain(predictor, image, schedule, rng.split(r));
  });
  EnsembleResult result{Tensor<float>({1, image.dim(1), image.dim(2)}), Tensor<float>({1, image.dim(1), image.dim(2)})};
  auto mean = result.mean_map.values();
  for (const auto& out : outputs) {
    const auto v = out.values();
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += std::clamp(v[i], -1.0f, 1.0f);
  }
  auto mask = result.mask.values();
  for (std::size_t i = 0; i < mean.size(); ++i) {
    mean[i] /= static_cast<float>(runs);
    mask[i] = mean[i] > 0.0f ? 1.0f : -1.0f;
  }
  return result;
}

EvalReport evaluate(const PredictorFactory& factory, const Dataset& data, const NoiseSchedule& schedule,
                    std::uint64_t seed, std::size_t runs, std::size_t threads) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  EvalReport report;
  report.samples.resize(data.size());
  const RandomStream root(seed);
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const auto& s = data[i];
    const auto result = ensemble_infer(factory(s), s.image, schedule, root.split(i), runs);
    report.samples[i] = {s.id, dice_iou(result.mask, s.mask)};
  });
  for (const auto& s : report.samples) {
    report.mean_dice += s.overlap.dice;
    report.mean_iou += s.overlap.iou;
  }
  report.mean_dice /= static_cast<double>(data.size());
  report.mean_iou /= static_cast<double>(data.size());
  return report;
}

std::string eval_csv(const EvalReport& report) {
  std::string out = "id,dice,iou\n";
  char buf[128];
  for (const auto& s : report.samples) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", s.overlap.dice, s.overlap.iou);
    out += s.id + buf;
  }
  std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f\n", report.mean_dice, report.mean_iou);
  return out + buf;
}

}  // namespace ncadiff
