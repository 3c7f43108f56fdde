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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ncadiff/cbam.hpp"
#include "ncadiff/nca.hpp"
#include "ncadiff/random.hpp"
#include "ncadiff/tensor.hpp"

namespace ncadiff {

enum class Variant { basic, cbam, multi, multi_cbam };

std::string_view variant_name(Variant v);
/// Throws ConfigError for unknown names.
Variant parse_variant(std::string_view name);
bool variant_uses_attention(Variant v);
std::size_t variant_levels(Variant v);

struct ModelConfig {
  Variant variant = Variant::basic;
  std::size_t channels = 64;
  std::size_t hidden = 512;
  std::size_t perception_kernels = 2;
  int n_steps = 10;
  double fire_rate = 0.5;
  std::size_t levels = 1;
  std::size_t downsample_factor = 4;
  std::size_t cbam_reduction = 4;

  /// Throws ConfigError on any violated constraint.
  void validate() const;
  /// Throws ShapeError when a two-level model cannot pool an H x W input.
  void check_image_size(std::size_t height, std::size_t width) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Closed-form count of trainable values.
std::size_t parameter_count(const ModelConfig& config);

template <typename T>
struct LevelParams {
  NcaRule<T> rule;
  std::optional<CbamParams<T>> attention;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Trainable state of one architecture variant: one rule (plus attention block)
/// per level, levels never share weights.
template <typename T>
class ModelParams {
 public:
  static ModelParams create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<LevelParams<T>>& levels() const { return levels_; }
  std::vector<LevelParams<T>>& levels() { return levels_; }

  /// Registry in a fixed order; names are unique and cover every trainable tensor.
  std::vector<NamedTensor<T>> named_parameters() const;
  std::size_t parameter_count() const;

  void set_requires_grad(bool flag);
  void zero_grad();
  /// Copy whose tensors share data with this model but own their gradients.
  ModelParams replica() const;
  ModelParams clone() const;
  void set_gates_forced_open(bool open);

  template <typename U>
  ModelParams<U> cast() const;

 private:
  template <typename>
  friend class ModelParams;

  ModelConfig config_;
  std::vector<LevelParams<T>> levels_;
};

template <typename T>
struct Prediction {
  Tensor<T> eps_hat;  // [1,H,W]
  Tensor<T> rgb_out;  // [3,H,W], RGB channels after the final rollout
};

/// eps_theta(x_t, I, t) for any variant. steps is T, used for the time plane.
template <typename T>
Prediction<T> predict_noise(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& x_t, int t,
                            int steps, RandomStream& rng);

template <typename T>
Prediction<T> predict_noise_basic(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& x_t, int t,
                                  int steps, RandomStream& rng);
template <typename T>
Prediction<T> predict_noise_cbam(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& x_t, int t,
                                 int steps, RandomStream& rng);
template <typename T>
Prediction<T> predict_noise_multi(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& x_t, int t,
                                  int steps, RandomStream& rng);
template <typename T>
Prediction<T> predict_noise_multi_cbam(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& x_t,
                                       int t, int steps, RandomStream& rng);

extern template class ModelParams<float>;
extern template class ModelParams<double>;

}  // namespace ncadiff
