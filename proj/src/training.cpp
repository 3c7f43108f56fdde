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

#include "ncadiff/training.hpp"

#include <cmath>
#include <numeric>

#include "ncadiff/errors.hpp"
#include "ncadiff/ops.hpp"
#include "ncadiff/parallel.hpp"

namespace ncadiff {

template <typename T>
Tensor<T> loss_noise(const Tensor<T>& eps_hat, const Tensor<T>& eps) {
  return mse(eps_hat, eps);
}

template <typename T>
Tensor<T> loss_rgb(const Tensor<T>& rgb_out, const Tensor<T>& x0) {
  if (rgb_out.rank() != 3 || rgb_out.dim(0) != 3 || x0.shape() != Shape{1, rgb_out.dim(1), rgb_out.dim(2)}) {
    throw ShapeError("loss_rgb: rgb " + shape_string(rgb_out.shape()) + " vs mask " + shape_string(x0.shape()));
  }
  Tensor<T> total = mse(slice(rgb_out, 0, 1), x0);
  for (std::size_t c = 1; c < 3; ++c) total = add(total, mse(slice(rgb_out, c, 1), x0));
  return total;
}

template <typename T>
LossTerms<T> loss_total(const Tensor<T>& eps_hat, const Tensor<T>& eps, const Tensor<T>& rgb_out,
                        const Tensor<T>& x0, bool use_rgb) {
  LossTerms<T> terms;
  terms.noise = loss_noise(eps_hat, eps);
  terms.rgb = loss_rgb(rgb_out, x0);
  terms.total = use_rgb ? add(terms.noise, terms.rgb) : terms.noise;
  return terms;
}

template <typename T>
OptimState<T> OptimState<T>::create(const std::vector<NamedTensor<T>>& params, const AdamWOptions& options) {
  if (!(options.lr > 0.0)) throw ArgumentError("AdamW learning rate must be positive");
  OptimState s;
  s.options = options;
  for (const auto& p : params) {
    s.names.push_back(p.name);
    s.first_moment.emplace_back(p.tensor.shape());
    s.second_moment.emplace_back(p.tensor.shape());
  }
  return s;
}

template <typename T>
void adamw_step(const std::vector<NamedTensor<T>>& params, OptimState<T>& opt) {
  if (params.size() != opt.names.size()) throw ArgumentError("adamw_step: parameter registry does not match state");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != opt.names[i] || params[i].tensor.numel() != opt.first_moment[i].numel()) {
      throw ArgumentError("adamw_step: parameter " + params[i].name + " does not match optimizer slot " + opt.names[i]);
    }
    if (!params[i].tensor.has_grad()) throw ArgumentError("adamw_step: missing gradient for " + params[i].name);
  }
  ++opt.step;
  const auto& o = opt.options;
  const double step = static_cast<double>(opt.step);
  const double bc1 = 1.0 - std::pow(o.beta1, step);
  const double bc2 = 1.0 - std::pow(o.beta2, step);
  const double decay = 1.0 - o.lr * o.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> p = params[i].tensor;
    auto values = p.values();
    const auto grad = p.grad();
    auto m = opt.first_moment[i].values();
    auto v = opt.second_moment[i].values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = static_cast<double>(grad[j]);
      const double mj = o.beta1 * static_cast<double>(m[j]) + (1.0 - o.beta1) * g;
      const double vj = o.beta2 * static_cast<double>(v[j]) + (1.0 - o.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + o.eps);
      values[j] = static_cast<T>(static_cast<double>(values[j]) * decay - o.lr * update);
    }
  }
}

std::map<int, int> StepMetrics::step_histogram() const {
  std::map<int, int> h;
  for (int t : sampled_steps) ++h[t];
  return h;
}

namespace {

struct SampleResult {
  ModelParams<float> replica;
  double loss_total = 0.0;
  double loss_noise = 0.0;
  double loss_rgb = 0.0;
  int t = 0;
};

}  // namespace

StepMetrics train_step(ModelParams<float>& model, std::span<const SegSample* const> batch,
                       const NoiseSchedule& schedule, OptimState<float>& opt, const RandomStream& rng,
                       const StepOptions& options) {
  if (batch.empty()) throw ArgumentError("train_step: empty batch");
  model.set_requires_grad(true);
  std::vector<SampleResult> results(batch.size());

  parallel_for(batch.size(), options.threads, [&](std::size_t i) {
    const SegSample& sample = *batch[i];
    RandomStream sample_rng = rng.split(i);
    const int t = 1 + static_cast<int>(sample_rng.uniform_index(static_cast<std::uint64_t>(schedule.steps)));
    const auto eps = normal_tensor<float>(sample.mask.shape(), sample_rng);
    const auto x_t = q_sample(sample.mask, t, eps, schedule);

    SampleResult& r = results[i];
    r.replica = model.replica();
    r.t = t;
    Tape<float> tape;
    {
      Tape<float>::Scope scope(tape);
      const auto pred = predict_noise(r.replica, sample.image, x_t, t, schedule.steps, sample_rng);
      const auto losses = loss_total(pred.eps_hat, eps, pred.rgb_out, sample.mask, options.use_rgb_loss);
      tape.backward(losses.total);
      r.loss_total = losses.total.item();
      r.loss_noise = losses.noise.item();
      r.loss_rgb = losses.rgb.item();
    }
  });

  StepMetrics metrics;
  const auto master = model.named_parameters();
  const float inv_batch = 1.0f / static_cast<float>(batch.size());
  for (std::size_t k = 0; k < master.size(); ++k) {
    auto g = master[k].tensor.grad_buffer();
    std::fill(g.begin(), g.end(), 0.0f);
    for (const auto& r : results) {
      const auto rg = r.replica.named_parameters()[k].tensor.grad();
      if (rg.empty()) continue;
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += rg[j];
    }
    for (auto& v : g) v *= inv_batch;
  }
  for (const auto& r : results) {
    metrics.loss_total += r.loss_total;
    metrics.loss_noise += r.loss_noise;
    metrics.loss_rgb += r.loss_rgb;
    metrics.sampled_steps.push_back(r.t);
  }
  const double n = static_cast<double>(batch.size());
  metrics.loss_total /= n;
  metrics.loss_noise /= n;
  metrics.loss_rgb /= n;

  adamw_step(master, opt);
  return metrics;
}

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, RandomStream rng)
    : batch_size_(batch_size), rng_(rng), order_(dataset_size) {
  if (dataset_size == 0) throw DataError("cannot sample batches from an empty dataset");
  if (batch_size == 0) throw ArgumentError("batch size must be at least 1");
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.uniform_index(i)]);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> batch;
  batch.reserve(batch_size_);
  while (batch.size() < batch_size_) {
    if (cursor_ == order_.size()) reshuffle();
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

void train(ModelParams<float>& model, OptimState<float>& opt, const Dataset& data, const NoiseSchedule& schedule,
           const TrainLoopOptions& options, const std::function<void(int, const StepMetrics&)>& on_step) {
  const RandomStream root(options.seed);
  BatchSampler sampler(data.size(), options.batch_size, root.split(1));
  const RandomStream step_root = root.split(2);
  for (int step = 1; step <= options.total_steps; ++step) {
    std::vector<const SegSample*> batch;
    for (auto i : sampler.next()) batch.push_back(&data[i]);
    const auto metrics = train_step(model, batch, schedule, opt, step_root.split(static_cast<std::uint64_t>(step)),
                                    options.step);
    if (on_step) on_step(step, metrics);
  }
}

template Tensor<float> loss_noise(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> loss_noise(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> loss_rgb(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> loss_rgb(const Tensor<double>&, const Tensor<double>&);
template LossTerms<float> loss_total(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                     const Tensor<float>&, bool);
template LossTerms<double> loss_total(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                      const Tensor<double>&, bool);
template struct OptimState<float>;
template struct OptimState<double>;
template void adamw_step(const std::vector<NamedTensor<float>>&, OptimState<float>&);
template void adamw_step(const std::vector<NamedTensor<double>>&, OptimState<double>&);

}  // namespace ncadiff
