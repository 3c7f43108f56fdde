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

#include "ncadiff/diffusion.hpp"

#include <cmath>
#include <string>

#include "ncadiff/errors.hpp"
#include "ncadiff/ops.hpp"

namespace ncadiff {

std::size_t NoiseSchedule::index(int t) const {
  if (t < 1 || t > steps) {
    throw ArgumentError("diffusion step " + std::to_string(t) + " outside [1," + std::to_string(steps) + "]");
  }
  return static_cast<std::size_t>(t - 1);
}

void NoiseSchedule::check_invariants() const {
  const auto n = static_cast<std::size_t>(steps);
  if (steps < 1 || beta.size() != n || alpha.size() != n || alpha_bar.size() != n) {
    throw ArgumentError("noise schedule tables do not match step count");
  }
  double product = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(beta[i] > 0.0 && beta[i] < 1.0)) throw ArgumentError("beta outside (0,1) at step " + std::to_string(i + 1));
    if (i > 0 && beta[i] < beta[i - 1]) throw ArgumentError("beta decreases at step " + std::to_string(i + 1));
    if (alpha[i] != 1.0 - beta[i]) throw ArgumentError("alpha != 1 - beta at step " + std::to_string(i + 1));
    if (i > 0 && !(alpha_bar[i] < alpha_bar[i - 1])) {
      throw ArgumentError("alpha_bar not strictly decreasing at step " + std::to_string(i + 1));
    }
    product *= alpha[i];
    if (std::abs(alpha_bar[i] - product) > 1e-12) {
      throw ArgumentError("alpha_bar is not the cumulative product at step " + std::to_string(i + 1));
    }
  }
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ArgumentError("schedule needs at least one step, got " + std::to_string(steps));
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ArgumentError("beta endpoints must satisfy 0 < start <= end < 1, got " + std::to_string(beta_start) +
                        ", " + std::to_string(beta_end));
  }
  NoiseSchedule s;
  s.steps = steps;
  const auto n = static_cast<std::size_t>(steps);
  s.beta.resize(n);
  s.alpha.resize(n);
  s.alpha_bar.resize(n);
  double product = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    s.beta[i] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[i] = 1.0 - s.beta[i];
    product *= s.alpha[i];
    s.alpha_bar[i] = product;
  }
  return s;
}

template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps, const NoiseSchedule& schedule) {
  if (x0.shape() != eps.shape()) {
    throw ShapeError("q_sample: x0 " + shape_string(x0.shape()) + " vs eps " + shape_string(eps.shape()));
  }
  const double ab = schedule.alpha_bar_at(t);
  return add(scale(x0, static_cast<T>(std::sqrt(ab))), scale(eps, static_cast<T>(std::sqrt(1.0 - ab))));
}

template <typename T>
Tensor<T> predict_x0(const Tensor<T>& x_t, int t, const Tensor<T>& eps_hat, const NoiseSchedule& schedule) {
  if (x_t.shape() != eps_hat.shape()) {
    throw ShapeError("predict_x0: x_t " + shape_string(x_t.shape()) + " vs eps " + shape_string(eps_hat.shape()));
  }
  const double ab = schedule.alpha_bar_at(t);
  const T noise_coeff = static_cast<T>(std::sqrt(1.0 - ab));
  const T inv_signal = static_cast<T>(1.0 / std::sqrt(ab));
  Tensor<T> out(x_t.shape());
  auto o = out.values();
  const auto xv = x_t.values();
  const auto ev = eps_hat.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (xv[i] - noise_coeff * ev[i]) * inv_signal;
  return out;
}

template <typename T>
Tensor<T> p_step(const Tensor<T>& x_t, int t, const Tensor<T>& eps_hat, const OptionalTensor<T>& z,
                 const NoiseSchedule& schedule) {
  const double beta = schedule.beta_at(t);
  if (x_t.shape() != eps_hat.shape() || (z && z->shape() != x_t.shape())) {
    throw ShapeError("p_step: x_t " + shape_string(x_t.shape()) + " does not match eps_hat/z");
  }
  if (t == 1 && z) {
    for (const T v : z->values()) {
      if (v != T(0)) throw ArgumentError("p_step: z must be zero at t = 1");
    }
  }
  const T inv_sqrt_alpha = static_cast<T>(1.0 / std::sqrt(schedule.alpha_at(t)));
  const T eps_coeff = static_cast<T>(beta / std::sqrt(1.0 - schedule.alpha_bar_at(t)));
  const T sigma = static_cast<T>(std::sqrt(beta));
  Tensor<T> out(x_t.shape());
  auto o = out.values();
  const auto xv = x_t.values();
  const auto ev = eps_hat.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = inv_sqrt_alpha * (xv[i] - eps_coeff * ev[i]);
  if (z) {
    const auto zv = z->values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += sigma * zv[i];
  }
  return out;
}

template <typename T>
Tensor<T> normal_tensor(const Shape& shape, RandomStream& rng) {
  Tensor<T> out(shape);
  for (auto& v : out.values()) v = static_cast<T>(rng.normal());
  return out;
}

template <typename T>
Tensor<T> reverse_chain(const NoisePredictor<T>& predictor, const Tensor<T>& image, const NoiseSchedule& schedule,
                        const RandomStream& rng, const ChainObserver<T>& observer) {
  if (image.rank() != 3) throw ShapeError("reverse_chain: image must be [3,H,W], got " + shape_string(image.shape()));
  const Shape shape{1, image.dim(1), image.dim(2)};
  RandomStream noise = rng.split(0);
  RandomStream predictor_rng = rng.split(1);
  Tensor<T> x = normal_tensor<T>(shape, noise);
  for (int t = schedule.steps; t >= 1; --t) {
    Tensor<T> eps_hat = predictor(x, image, t, predictor_rng);
    std::optional<Tensor<T>> z;
    if (t > 1) z = normal_tensor<T>(shape, noise);
    Tensor<T> next = p_step(x, t, eps_hat, z, schedule);
    if (observer) observer(t, x, eps_hat, next);
    x = std::move(next);
  }
  return x;
}

#define NCADIFF_INSTANTIATE_DIFFUSION(T)                                                                        \
  template Tensor<T> q_sample(const Tensor<T>&, int, const Tensor<T>&, const NoiseSchedule&);                   \
  template Tensor<T> predict_x0(const Tensor<T>&, int, const Tensor<T>&, const NoiseSchedule&);                 \
  template Tensor<T> p_step(const Tensor<T>&, int, const Tensor<T>&, const std::optional<Tensor<T>>&,           \
                            const NoiseSchedule&);                                                              \
  template Tensor<T> normal_tensor(const Shape&, RandomStream&);                                                \
  template Tensor<T> reverse_chain(const NoisePredictor<T>&, const Tensor<T>&, const NoiseSchedule&,            \
                                   const RandomStream&, const ChainObserver<T>&);

NCADIFF_INSTANTIATE_DIFFUSION(float)
NCADIFF_INSTANTIATE_DIFFUSION(double)

}  // namespace ncadiff
