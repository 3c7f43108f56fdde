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

#include "ncadiff/nca.hpp"

#include <cmath>
#include <string>

#include "ncadiff/errors.hpp"
#include "ncadiff/ops.hpp"

namespace ncadiff {
namespace {

constexpr std::size_t kPerceptionKernel = 3;

template <typename T>
Tensor<T> uniform_tensor(const Shape& shape, double bound, RandomStream& rng) {
  Tensor<T> out(shape);
  for (auto& v : out.values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  return out;
}

}  // namespace

template <typename T>
Tensor<T> time_plane(std::size_t height, std::size_t width, int t, int steps) {
  return Tensor<T>(Shape{1, height, width}, static_cast<T>(t) / static_cast<T>(steps));
}

template <typename T>
CellGrid<T> init_grid(const Tensor<T>& image, const Tensor<T>& x_t, int t, int steps, std::size_t channels) {
  if (channels < layout::kMinChannels) {
    throw ArgumentError("init_grid: need at least " + std::to_string(layout::kMinChannels) + " channels, got " +
                        std::to_string(channels));
  }
  if (image.rank() != 3 || image.dim(0) != layout::kRgbCount) {
    throw ShapeError("init_grid: image must be [3,H,W], got " + shape_string(image.shape()));
  }
  const std::size_t height = image.dim(1);
  const std::size_t width = image.dim(2);
  if (x_t.shape() != Shape{1, height, width}) {
    throw ShapeError("init_grid: x_t " + shape_string(x_t.shape()) + " not aligned with image " +
                     shape_string(image.shape()));
  }
  if (t < 1 || t > steps) {
    throw ArgumentError("init_grid: step " + std::to_string(t) + " outside [1," + std::to_string(steps) + "]");
  }
  return CellGrid<T>{concat<T>({
      Tensor<T>(Shape{1, height, width}),
      image,
      x_t,
      Tensor<T>(Shape{layout::hidden_count(channels), height, width}),
      time_plane<T>(height, width, t, steps),
  })};
}

template <typename T>
NcaRule<T> NcaRule<T>::create(std::size_t channels, std::size_t hidden, std::size_t kernel_count, double fire_rate,
                              RandomStream& rng) {
  if (channels < layout::kMinChannels || hidden == 0) {
    throw ArgumentError("NcaRule: invalid channels/hidden " + std::to_string(channels) + "/" + std::to_string(hidden));
  }
  if (!(fire_rate > 0.0 && fire_rate <= 1.0)) {
    throw ArgumentError("NcaRule: fire rate must lie in (0,1], got " + std::to_string(fire_rate));
  }
  NcaRule rule;
  const double kernel_bound = 1.0 / static_cast<double>(kPerceptionKernel);
  for (std::size_t j = 0; j < kernel_count; ++j) {
    rule.kernels.push_back(uniform_tensor<T>({channels, kPerceptionKernel, kPerceptionKernel}, kernel_bound, rng));
  }
  const std::size_t fan_in = (kernel_count + 1) * channels;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  rule.fc1_weight = uniform_tensor<T>({fan_in, hidden}, bound, rng);
  rule.fc1_bias = uniform_tensor<T>({hidden}, bound, rng);
  rule.fc2_weight = Tensor<T>(Shape{hidden, channels});
  rule.fire_rate = fire_rate;
  return rule;
}

template <typename T>
std::size_t NcaRule<T>::parameter_count() const {
  std::size_t n = fc1_weight.numel() + fc1_bias.numel() + fc2_weight.numel();
  for (const auto& k : kernels) n += k.numel();
  return n;
}

template <typename T>
std::size_t NcaRule<T>::count_parameters(std::size_t channels, std::size_t hidden, std::size_t kernel_count) {
  const std::size_t p = kernel_count + 1;
  return kernel_count * channels * kPerceptionKernel * kPerceptionKernel + p * channels * hidden + hidden +
         hidden * channels;
}

template <typename T>
Tensor<T> perceive(const Tensor<T>& state, const NcaRule<T>& rule) {
  std::vector<Tensor<T>> blocks;
  blocks.reserve(rule.kernels.size() + 1);
  blocks.push_back(state);
  for (const auto& k : rule.kernels) blocks.push_back(conv2d(state, k, ConvMode::depthwise, Padding::replicate));
  return concat(blocks);
}

template <typename T>
Tensor<T> fire_mask(std::size_t height, std::size_t width, double rate, RandomStream& rng) {
  Tensor<T> mask(Shape{1, height, width});
  for (auto& v : mask.values()) v = rng.bernoulli(rate) ? T(1) : T(0);
  return mask;
}

template <typename T>
CellGrid<T> nca_step(const CellGrid<T>& grid, const NcaRule<T>& rule, const Tensor<T>& mask,
                     const CbamParams<T>* attention) {
  const auto& state = grid.state;
  if (state.rank() != 3 || state.dim(0) != rule.channels()) {
    throw ShapeError("nca_step: state " + shape_string(state.shape()) + " does not match rule with " +
                     std::to_string(rule.channels()) + " channels");
  }
  if (mask.shape() != Shape{1, state.dim(1), state.dim(2)}) {
    throw ShapeError("nca_step: fire mask " + shape_string(mask.shape()) + " does not match state " +
                     shape_string(state.shape()));
  }
  const Tensor<T> seen = attention ? cbam_apply(state, *attention) : state;
  const auto hidden = relu(pointwise_affine(perceive(seen, rule), rule.fc1_weight, rule.fc1_bias));
  const auto delta = pointwise_affine(hidden, rule.fc2_weight);
  return CellGrid<T>{add(state, mul(delta, mask))};
}

template <typename T>
CellGrid<T> rollout(const CellGrid<T>& grid, const NcaRule<T>& rule, int steps, RandomStream& rng,
                    const CbamParams<T>* attention) {
  if (steps < 1) throw ArgumentError("rollout: need at least one step, got " + std::to_string(steps));
  CellGrid<T> current = grid;
  for (int i = 0; i < steps; ++i) {
    const auto mask = fire_mask<T>(current.height(), current.width(), rule.fire_rate, rng);
    current = nca_step(current, rule, mask, attention);
  }
  return current;
}

template <typename T>
Tensor<T> read_noise(const CellGrid<T>& grid) {
  return slice(grid.state, layout::kNoise, 1);
}

#define NCADIFF_INSTANTIATE_NCA(T)                                                                         \
  template struct NcaRule<T>;                                                                              \
  template Tensor<T> time_plane(std::size_t, std::size_t, int, int);                                       \
  template CellGrid<T> init_grid(const Tensor<T>&, const Tensor<T>&, int, int, std::size_t);               \
  template Tensor<T> perceive(const Tensor<T>&, const NcaRule<T>&);                                        \
  template Tensor<T> fire_mask(std::size_t, std::size_t, double, RandomStream&);                           \
  template CellGrid<T> nca_step(const CellGrid<T>&, const NcaRule<T>&, const Tensor<T>&,                   \
                                const CbamParams<T>*);                                                     \
  template CellGrid<T> rollout(const CellGrid<T>&, const NcaRule<T>&, int, RandomStream&,                  \
                               const CbamParams<T>*);                                                      \
  template Tensor<T> read_noise(const CellGrid<T>&);

NCADIFF_INSTANTIATE_NCA(float)
NCADIFF_INSTANTIATE_NCA(double)

}  // namespace ncadiff
