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
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ncadiff/dataset.hpp"
#include "ncadiff/diffusion.hpp"
#include "ncadiff/models.hpp"
#include "ncadiff/random.hpp"
#include "ncadiff/tensor.hpp"

namespace ncadiff {

template <typename T>
struct LossTerms {
  Tensor<T> total;
  Tensor<T> noise;
  Tensor<T> rgb;
};

/// Mean squared error between predicted and true noise.
template <typename T>
Tensor<T> loss_noise(const Tensor<T>& eps_hat, const Tensor<T>& eps);

/// Sum over the three RGB channels of the per-channel mean squared error
/// against the [-1,1] mask.
template <typename T>
Tensor<T> loss_rgb(const Tensor<T>& rgb_out, const Tensor<T>& x0);

/// loss_noise + loss_rgb. With use_rgb = false the RGB term is still reported
/// but excluded from the total (noise-only ablation).
template <typename T>
LossTerms<T> loss_total(const Tensor<T>& eps_hat, const Tensor<T>& eps, const Tensor<T>& rgb_out,
                        const Tensor<T>& x0, bool use_rgb = true);

struct AdamWOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  friend bool operator==(const AdamWOptions&, const AdamWOptions&) = default;
};

/// Moments are stored per registry name, in registry order.
template <typename T>
struct OptimState {
  AdamWOptions options;
  std::uint64_t step = 0;
  std::vector<std::string> names;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;

  static OptimState create(const std::vector<NamedTensor<T>>& params, const AdamWOptions& options);
};

/// Decoupled weight decay (p -= lr * wd * p) followed by the bias-corrected Adam
/// update, using each parameter's accumulated gradient. Throws ArgumentError if
/// a parameter has no gradient or the registry does not match the state.
template <typename T>
void adamw_step(const std::vector<NamedTensor<T>>& params, OptimState<T>& opt);

struct StepMetrics {
  double loss_total = 0.0;
  double loss_noise = 0.0;
  double loss_rgb = 0.0;
  std::vector<int> sampled_steps;  // diffusion step drawn for each batch sample

  std::map<int, int> step_histogram() const;
};

struct StepOptions {
  bool use_rgb_loss = true;
  std::size_t threads = 1;
};

/// One optimisation step on a batch. Sample i draws t and eps, then its fire
/// masks, from rng.split(i) and runs forward/backward on a private tape.
/// Gradients and losses are averaged over the batch in sample order before a
/// single AdamW update.
StepMetrics train_step(ModelParams<float>& model, std::span<const SegSample* const> batch,
                       const NoiseSchedule& schedule, OptimState<float>& opt, const RandomStream& rng,
                       const StepOptions& options = {});

/// Epoch-wise shuffled batches; a batch larger than the dataset wraps into the
/// next epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, RandomStream rng);

  std::vector<std::size_t> next();

 private:
  void reshuffle();

  std::size_t batch_size_;
  RandomStream rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

struct TrainLoopOptions {
  std::size_t batch_size = 8;
  int total_steps = 1000;
  std::uint64_t seed = 0;
  StepOptions step;
};

/// Runs total_steps train_step calls. Step s (1-based) uses the stream
/// RandomStream(seed).split(2).split(s); batches come from split(1).
void train(ModelParams<float>& model, OptimState<float>& opt, const Dataset& data, const NoiseSchedule& schedule,
           const TrainLoopOptions& options, const std::function<void(int step, const StepMetrics&)>& on_step = {});

}  // namespace ncadiff
