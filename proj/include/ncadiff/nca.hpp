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
#include <vector>

#include "ncadiff/cbam.hpp"
#include "ncadiff/random.hpp"
#include "ncadiff/tensor.hpp"

namespace ncadiff {

/// Channel roles inside a cell state of c channels.
namespace layout {
inline constexpr std::size_t kNoise = 0;        // predicted noise, read out after the rollout
inline constexpr std::size_t kRgb = 1;          // three channels seeded with the conditional image
inline constexpr std::size_t kRgbCount = 3;
inline constexpr std::size_t kNoisyMask = 4;    // x_t
inline constexpr std::size_t kFirstHidden = 5;
inline constexpr std::size_t kMinChannels = 7;  // at least one hidden channel
constexpr std::size_t time_channel(std::size_t channels) { return channels - 1; }
constexpr std::size_t hidden_count(std::size_t channels) { return channels - kFirstHidden - 1; }
}  // namespace layout

template <typename T>
struct CellGrid {
  Tensor<T> state;  // [c,H,W]

  std::size_t channels() const { return state.dim(0); }
  std::size_t height() const { return state.dim(1); }
  std::size_t width() const { return state.dim(2); }
};

/// Constant plane t / T, shape [1,H,W].
template <typename T>
Tensor<T> time_plane(std::size_t height, std::size_t width, int t, int steps);

/// Zero grid with the image in the RGB channels, x_t in the noisy-mask channel
/// and t / T in the last channel.
template <typename T>
CellGrid<T> init_grid(const Tensor<T>& image, const Tensor<T>& x_t, int t, int steps, std::size_t channels);

/// Shared per-cell update rule.
///
/// perception = [state, dw_1(state), ..., dw_k(state)] from k learned depthwise 3x3
/// kernels (replicate padding); delta = fc2(relu(fc1(perception))) evaluated at
/// every cell. fc2 starts at zero so a fresh rule is the identity map.
template <typename T>
struct NcaRule {
  std::vector<Tensor<T>> kernels;  // k x [c,3,3]
  Tensor<T> fc1_weight;            // [(k+1)c, h]
  Tensor<T> fc1_bias;              // [h]
  Tensor<T> fc2_weight;            // [h, c]
  double fire_rate = 0.5;

  static NcaRule create(std::size_t channels, std::size_t hidden, std::size_t kernel_count, double fire_rate,
                        RandomStream& rng);

  std::size_t channels() const { return fc2_weight.dim(1); }
  std::size_t hidden() const { return fc2_weight.dim(0); }
  std::size_t parameter_count() const;
  static std::size_t count_parameters(std::size_t channels, std::size_t hidden, std::size_t kernel_count);
};

template <typename T>
Tensor<T> perceive(const Tensor<T>& state, const NcaRule<T>& rule);

/// Bernoulli(rate) per cell, row-major draw order, shape [1,H,W].
template <typename T>
Tensor<T> fire_mask(std::size_t height, std::size_t width, double rate, RandomStream& rng);

/// state + mask * delta(state). With attention, the rule perceives
/// cbam_apply(state) instead of the raw state; the residual is still added to
/// the raw state.
template <typename T>
CellGrid<T> nca_step(const CellGrid<T>& grid, const NcaRule<T>& rule, const Tensor<T>& mask,
                     const CbamParams<T>* attention = nullptr);

/// n asynchronous steps, one fresh fire mask per step drawn from rng.
template <typename T>
CellGrid<T> rollout(const CellGrid<T>& grid, const NcaRule<T>& rule, int steps, RandomStream& rng,
                    const CbamParams<T>* attention = nullptr);

template <typename T>
Tensor<T> read_noise(const CellGrid<T>& grid);

extern template struct NcaRule<float>;
extern template struct NcaRule<double>;

}  // namespace ncadiff
