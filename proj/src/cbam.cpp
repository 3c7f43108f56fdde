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

#include "ncadiff/cbam.hpp"

#include <string>

#include "ncadiff/errors.hpp"
#include "ncadiff/ops.hpp"

namespace ncadiff {
namespace {

template <typename T>
Tensor<T> uniform_tensor(const Shape& shape, double bound, RandomStream& rng) {
  Tensor<T> out(shape);
  for (auto& v : out.values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  return out;
}

void check_reduction(std::size_t channels, std::size_t reduction) {
  if (reduction == 0 || channels % reduction != 0) {
    throw ArgumentError("cbam: channel count " + std::to_string(channels) + " is not divisible by reduction " +
                        std::to_string(reduction));
  }
}

template <typename T>
Tensor<T> shared_mlp(const Tensor<T>& descriptor, const CbamParams<T>& p) {
  const auto row = reshape(descriptor, Shape{1, descriptor.numel()});
  return affine(relu(affine(row, p.mlp_w0)), p.mlp_w1);
}

}  // namespace

template <typename T>
CbamParams<T> CbamParams<T>::create(std::size_t channels, std::size_t reduction, RandomStream& rng) {
  check_reduction(channels, reduction);
  CbamParams p = zeros(channels, reduction);
  p.mlp_w0 = uniform_tensor<T>({channels, channels / reduction}, 0.05, rng);
  p.mlp_w1 = uniform_tensor<T>({channels / reduction, channels}, 0.05, rng);
  return p;
}

template <typename T>
CbamParams<T> CbamParams<T>::zeros(std::size_t channels, std::size_t reduction) {
  check_reduction(channels, reduction);
  CbamParams p;
  p.mlp_w0 = Tensor<T>({channels, channels / reduction});
  p.mlp_w1 = Tensor<T>({channels / reduction, channels});
  p.spatial_kernel = Tensor<T>({1, 2, kSpatialAttentionKernel, kSpatialAttentionKernel});
  p.spatial_bias = Tensor<T>({1});
  p.reduction = reduction;
  return p;
}

template <typename T>
std::size_t CbamParams<T>::parameter_count() const {
  return mlp_w0.numel() + mlp_w1.numel() + spatial_kernel.numel() + spatial_bias.numel();
}

template <typename T>
std::size_t CbamParams<T>::count_parameters(std::size_t channels, std::size_t reduction) {
  check_reduction(channels, reduction);
  return 2 * channels * (channels / reduction) + 2 * kSpatialAttentionKernel * kSpatialAttentionKernel + 1;
}

template <typename T>
Tensor<T> channel_attention(const Tensor<T>& x, const CbamParams<T>& p) {
  if (x.rank() != 3 || x.dim(0) != p.channels()) {
    throw ShapeError("channel_attention: input " + shape_string(x.shape()) + " does not have " +
                     std::to_string(p.channels()) + " channels");
  }
  if (p.gates_forced_open) return Tensor<T>(Shape{x.dim(0)}, T(1));
  const auto logits = add(shared_mlp(pool(x, PoolKind::global_avg), p), shared_mlp(pool(x, PoolKind::global_max), p));
  return reshape(sigmoid(logits), Shape{x.dim(0)});
}

template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& x, const CbamParams<T>& p) {
  if (x.rank() != 3) throw ShapeError("spatial_attention: input must be [c,H,W], got " + shape_string(x.shape()));
  if (p.gates_forced_open) return Tensor<T>(Shape{1, x.dim(1), x.dim(2)}, T(1));
  const auto planes = concat<T>({pool(x, PoolKind::channel_avg), pool(x, PoolKind::channel_max)});
  return sigmoid(conv2d(planes, p.spatial_kernel, ConvMode::dense, Padding::replicate,
                        p.spatial_bias));
}

template <typename T>
Tensor<T> cbam_apply(const Tensor<T>& x, const CbamParams<T>& p) {
  const auto gated = mul(x, channel_attention(x, p));
  return mul(gated, spatial_attention(gated, p));
}

template struct CbamParams<float>;
template struct CbamParams<double>;
template Tensor<float> channel_attention(const Tensor<float>&, const CbamParams<float>&);
template Tensor<double> channel_attention(const Tensor<double>&, const CbamParams<double>&);
template Tensor<float> spatial_attention(const Tensor<float>&, const CbamParams<float>&);
template Tensor<double> spatial_attention(const Tensor<double>&, const CbamParams<double>&);
template Tensor<float> cbam_apply(const Tensor<float>&, const CbamParams<float>&);
template Tensor<double> cbam_apply(const Tensor<double>&, const CbamParams<double>&);

}  // namespace ncadiff
