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
#include <optional>
#include <type_traits>
#include <vector>

#include "ncadiff/tensor.hpp"

namespace ncadiff {

/// Non-deduced optional operand, so a plain Tensor converts implicitly.
template <typename T>
using OptionalTensor = std::type_identity_t<std::optional<Tensor<T>>>;

// Binary elementwise ops accept b with the same shape as a, or one of three
// broadcast forms: a single value, a per-channel vector [a.dim(0)], or a plane
// [1, a.dim(1), ...] repeated over a's leading axis.

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);

/// y = x W (+ bias) for x [n,k], W [k,m], bias [m].
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight, const OptionalTensor<T>& bias = std::nullopt);

/// The same dense layer applied independently at every pixel of x [k,H,W]:
/// y[:,i,j] = W^T x[:,i,j] (+ bias), giving [m,H,W].
template <typename T>
Tensor<T> pointwise_affine(const Tensor<T>& x, const Tensor<T>& weight,
                           const OptionalTensor<T>& bias = std::nullopt);

enum class ConvMode { depthwise, dense };
enum class Padding { replicate, circular };

/// Same-size 2-D cross-correlation of x [c_in,H,W].
///
/// depthwise: kernels [c,k,k], one kernel per channel.
/// dense:     kernels [c_out,c_in,k,k], optional bias [c_out].
/// Each output accumulates (bias first, then) input channels, kernel rows and
/// kernel columns in increasing order.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernels, ConvMode mode, Padding padding,
                 const OptionalTensor<T>& bias = std::nullopt);

enum class PoolKind { global_avg, global_max, channel_avg, channel_max, spatial_avg };

/// global_*: [c,H,W] -> [c].  channel_*: [c,H,W] -> [1,H,W].
/// spatial_avg: k x k average pooling with stride k, [c,H,W] -> [c,H/k,W/k].
/// Sums run in row-major order, then divide once. Max routes its gradient to the
/// first (lowest index) maximum.
template <typename T>
Tensor<T> pool(const Tensor<T>& x, PoolKind kind, std::size_t k = 1);

enum class ResampleKind { bilinear_up, nearest_up };

/// Integer-factor upsampling of [c,h,w]. Bilinear uses the half-pixel
/// (align_corners = false) convention with edge clamping.
template <typename T>
Tensor<T> resample(const Tensor<T>& x, std::size_t factor, ResampleKind kind);

/// Concatenation along axis 0.
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts);
/// Rows [begin, begin+count) of axis 0.
template <typename T> Tensor<T> slice(const Tensor<T>& x, std::size_t begin, std::size_t count);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
/// Mean squared difference over all elements.
template <typename T> Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace ncadiff
