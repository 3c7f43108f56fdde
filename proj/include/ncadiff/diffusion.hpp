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

#include <functional>
#include <optional>
#include <vector>

#include "ncadiff/ops.hpp"
#include "ncadiff/random.hpp"
#include "ncadiff/tensor.hpp"

namespace ncadiff {

/// Variance schedule for a T-step DDPM. All tables are indexed by 1-based step
/// through the accessors; storage is 0-based.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  double beta_at(int t) const { return beta[index(t)]; }
  double alpha_at(int t) const { return alpha[index(t)]; }
  double alpha_bar_at(int t) const { return alpha_bar[index(t)]; }

  /// Throws ArgumentError unless 1 <= t <= steps.
  std::size_t index(int t) const;

  /// Throws ArgumentError if any schedule invariant is violated.
  void check_invariants() const;
};

inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

/// Linear beta schedule from beta_start (t = 1) to beta_end (t = T).
NoiseSchedule make_schedule(int steps, double beta_start = kDefaultBetaStart, double beta_end = kDefaultBetaEnd);

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps. Differentiable.
template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps, const NoiseSchedule& schedule);

/// Inverts q_sample for a given noise estimate.
template <typename T>
Tensor<T> predict_x0(const Tensor<T>& x_t, int t, const Tensor<T>& eps_hat, const NoiseSchedule& schedule);

/// One reverse transition x_t -> x_{t-1} with variance beta_t:
/// (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t) + sqrt(beta_t) z.
/// z may be omitted (treated as zero) and must be zero at t = 1.
template <typename T>
Tensor<T> p_step(const Tensor<T>& x_t, int t, const Tensor<T>& eps_hat, const OptionalTensor<T>& z,
                 const NoiseSchedule& schedule);

template <typename T>
Tensor<T> normal_tensor(const Shape& shape, RandomStream& rng);

/// eps_theta(x_t, I, t). The stream feeds any stochasticity inside the predictor
/// (NCA fire masks) and is separate from the chain's own noise stream.
template <typename T>
using NoisePredictor = std::function<Tensor<T>(const Tensor<T>& x_t, const Tensor<T>& image, int t, RandomStream& rng)>;

/// Called after every reverse step with (t, x_t, eps_hat, x_{t-1}).
template <typename T>
using ChainObserver = std::function<void(int t, const Tensor<T>& x_t, const Tensor<T>& eps_hat, const Tensor<T>& x_prev)>;

/// Ancestral sampling from x_T ~ N(0, I) down to t = 1. Returns the unclipped x0
/// estimate with shape [1,H,W] for an image [3,H,W].
///
/// rng.split(0) supplies x_T and the per-step z; rng.split(1) is handed to the
/// predictor.
template <typename T>
Tensor<T> reverse_chain(const NoisePredictor<T>& predictor, const Tensor<T>& image, const NoiseSchedule& schedule,
                        const RandomStream& rng, const ChainObserver<T>& observer = {});

}  // namespace ncadiff
