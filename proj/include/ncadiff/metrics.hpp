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

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ncadiff/dataset.hpp"
#include "ncadiff/diffusion.hpp"
#include "ncadiff/models.hpp"
#include "ncadiff/random.hpp"
#include "ncadiff/tensor.hpp"

namespace ncadiff {

struct Overlap {
  double dice = 0.0;
  double iou = 0.0;
};

/// Foreground is any value > 0. Two empty masks score (1, 1).
Overlap dice_iou(const Tensor<float>& prediction, const Tensor<float>& truth);

/// Noise predictor backed by a trained model; the fire-mask draws come from
/// the stream handed in by the reverse chain.
NoisePredictor<float> model_predictor(const ModelParams<float>& params, int timesteps);

/// Predictor that returns the exact noise separating x_t from a known x0.
NoisePredictor<float> oracle_predictor(const Tensor<float>& x0, const NoiseSchedule& schedule);

struct EnsembleResult {
  Tensor<float> mean_map;  // mean of the clipped chain outputs, [1,H,W]
  Tensor<float> mask;      // +1 where mean_map > 0, else -1
};

/// Runs independent reverse chains, run r on rng.split(r).
EnsembleResult ensemble_infer(const NoisePredictor<float>& predictor, const Tensor<float>& image,
                              const NoiseSchedule& schedule, const RandomStream& rng, std::size_t runs,
                              std::size_t threads = 1);

struct SampleScore {
  std::string id;
  Overlap overlap;
};

struct EvalReport {
  std::vector<SampleScore> samples;
  double mean_dice = 0.0;
  double mean_iou = 0.0;
};

using PredictorFactory = std::function<NoisePredictor<float>(const SegSample&)>;

/// Sample i is inferred with RandomStream(seed).split(i).
EvalReport evaluate(const PredictorFactory& factory, const Dataset& data, const NoiseSchedule& schedule,
                    std::uint64_t seed, std::size_t runs, std::size_t threads = 1);

/// "id,dice,iou" rows followed by a "mean" row.
std::string eval_csv(const EvalReport& report);

}  // namespace ncadiff
