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

#include "ncadiff/random.hpp"
#include "ncadiff/tensor.hpp"

namespace ncadiff {

inline constexpr std::size_t kSpatialAttentionKernel = 7;

/// Convolutional block attention over a c-channel cell state: a bias-free
/// two-layer MLP (c -> c/r -> c) shared by the average- and max-pooled channel
/// descriptors, followed by a 7x7 convolution over the channel-pooled planes.
template <typename T>
struct CbamParams {
  Tensor<T> mlp_w0;          // [c, c/r]
  Tensor<T> mlp_w1;          // [c/r, c]
  Tensor<T> spatial_kernel;  // [1, 2, 7, 7]
  Tensor<T> spatial_bias;    // [1]
  std::size_t reduction = 4;
  /// Test harness switch: both gates evaluate to exactly 1 (the saturated limit).
  bool gates_forced_open = false;

  /// MLP weights uniform in [-0.05, 0.05]; spatial convolution zero.
  static CbamParams create(std::size_t channels, std::size_t reduction, RandomStream& rng);
  /// All weights zero, so both gates are exactly 0.5.
  static CbamParams zeros(std::size_t channels, std::size_t reduction);

  std::size_t channels() const { return mlp_w0.dim(0); }
  std::size_t parameter_count() const;
  static std::size_t count_parameters(std::size_t channels, std::size_t reduction);
};

/// sigmoid(MLP(avgpool(x)) + MLP(maxpool(x))), shape [c].
template <typename T>
Tensor<T> channel_attention(const Tensor<T>& x, const CbamParams<T>& p);

/// sigmoid(conv7x7([mean_c(x), max_c(x)])) with replicate padding, shape [1,H,W].
template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& x, const CbamParams<T>& p);

/// Channel gate first, then the spatial gate computed on the channel-gated map.
template <typename T>
Tensor<T> cbam_apply(const Tensor<T>& x, const CbamParams<T>& p);

extern template struct CbamParams<float>;
extern template struct CbamParams<double>;

}  // namespace ncadiff
