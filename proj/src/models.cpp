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

#include "ncadiff/models.hpp"

#include <array>
#include <set>
#include <string>

#include "ncadiff/errors.hpp"
#include "ncadiff/ops.hpp"

namespace ncadiff {
namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 4> kVariantNames{{
    {Variant::basic, "basic"},
    {Variant::cbam, "cbam"},
    {Variant::multi, "multi"},
    {Variant::multi_cbam, "multi_cbam"},
}};

template <typename T, typename Fn>
void for_each_tensor(const std::vector<LevelParams<T>>& levels, Fn&& fn) {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const std::string prefix = "level" + std::to_string(i) + ".";
    const auto& rule = levels[i].rule;
    for (std::size_t j = 0; j < rule.kernels.size(); ++j) {
      fn(prefix + "perception.kernel" + std::to_string(j + 1), rule.kernels[j]);
    }
    fn(prefix + "fc1.weight", rule.fc1_weight);
    fn(prefix + "fc1.bias", rule.fc1_bias);
    fn(prefix + "fc2.weight", rule.fc2_weight);
    if (const auto& att = levels[i].attention) {
      fn(prefix + "cbam.mlp0.weight", att->mlp_w0);
      fn(prefix + "cbam.mlp1.weight", att->mlp_w1);
      fn(prefix + "cbam.spatial.weight", att->spatial_kernel);
      fn(prefix + "cbam.spatial.bias", att->spatial_bias);
    }
  }
}

template <typename T, typename Fn>
std::vector<LevelParams<T>> map_tensors(const std::vector<LevelParams<T>>& levels, Fn&& fn) {
  std::vector<LevelParams<T>> out = levels;
  for (auto& level : out) {
    for (auto& k : level.rule.kernels) k = fn(k);
    level.rule.fc1_weight = fn(level.rule.fc1_weight);
    level.rule.fc1_bias = fn(level.rule.fc1_bias);
    level.rule.fc2_weight = fn(level.rule.fc2_weight);
    if (level.attention) {
      level.attention->mlp_w0 = fn(level.attention->mlp_w0);
      level.attention->mlp_w1 = fn(level.attention->mlp_w1);
      level.attention->spatial_kernel = fn(level.attention->spatial_kernel);
      level.attention->spatial_bias = fn(level.attention->spatial_bias);
    }
  }
  return out;
}

template <typename T>
const CbamParams<T>* attention_of(const LevelParams<T>& level) {
  return level.attention ? &*level.attention : nullptr;
}

template <typename T>
Prediction<T> read_prediction(const CellGrid<T>& grid) {
  return {read_noise(grid), slice(grid.state, layout::kRgb, layout::kRgbCount)};
}

template <typename T>
Prediction<T> single_level(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& x_t, int t,
                           int steps, RandomStream& rng) {
  const auto& cfg = params.config();
  const auto& level = params.levels().at(0);
  const auto grid = init_grid(image, x_t, t, steps, cfg.channels);
  return read_prediction(rollout(grid, level.rule, cfg.n_steps, rng, attention_of(level)));
}

// Level 1 runs on average-pooled inputs; its whole state is upsampled, the
// conditioning channels are re-seeded at full resolution, and level 2 refines.
template <typename T>
Prediction<T> two_level(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& x_t, int t, int steps,
                        RandomStream& rng) {
  const auto& cfg = params.config();
  cfg.check_image_size(image.dim(1), image.dim(2));
  const std::size_t f = cfg.downsample_factor;
  const std::size_t c = cfg.channels;
  const auto& coarse = params.levels().at(0);
  const auto& fine = params.levels().at(1);

  const auto low_grid = init_grid(pool(image, PoolKind::spatial_avg, f), pool(x_t, PoolKind::spatial_avg, f), t,
                                  steps, c);
  const auto low = rollout(low_grid, coarse.rule, cfg.n_steps, rng, attention_of(coarse));
  const auto up = resample(low.state, f, ResampleKind::bilinear_up);

  const CellGrid<T> reseeded{concat<T>({
      slice(up, layout::kNoise, 1),
      image,
      x_t,
      slice(up, layout::kFirstHidden, layout::hidden_count(c)),
      time_plane<T>(image.dim(1), image.dim(2), t, steps),
  })};
  return read_prediction(rollout(reseeded, fine.rule, cfg.n_steps, rng, attention_of(fine)));
}

template <typename T>
void expect_variant(const ModelParams<T>& params, Variant expected) {
  if (params.config().variant != expected) {
    throw ArgumentError("model is variant " + std::string(variant_name(params.config().variant)) + ", expected " +
                        std::string(variant_name(expected)));
  }
}

}  // namespace

std::string_view variant_name(Variant v) {
  for (const auto& [variant, name] : kVariantNames) {
    if (variant == v) return name;
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [variant, n] : kVariantNames) {
    if (n == name) return variant;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected basic, cbam, multi or multi_cbam)");
}

bool variant_uses_attention(Variant v) { return v == Variant::cbam || v == Variant::multi_cbam; }

std::size_t variant_levels(Variant v) { return v == Variant::multi || v == Variant::multi_cbam ? 2 : 1; }

void ModelConfig::validate() const {
  if (channels < layout::kMinChannels) {
    throw ConfigError("channels must be at least " + std::to_string(layout::kMinChannels) + ", got " +
                      std::to_string(channels));
  }
  if (hidden == 0) throw ConfigError("hidden must be positive");
  if (n_steps < 1) throw ConfigError("n_steps must be at least 1, got " + std::to_string(n_steps));
  if (!(fire_rate > 0.0 && fire_rate <= 1.0)) {
    throw ConfigError("fire_rate must lie in (0,1], got " + std::to_string(fire_rate));
  }
  if (levels != variant_levels(variant)) {
    throw ConfigError("variant " + std::string(variant_name(variant)) + " requires levels = " +
                      std::to_string(variant_levels(variant)) + ", got " + std::to_string(levels));
  }
  if (downsample_factor < 1) throw ConfigError("downsample_factor must be positive");
  if (variant_uses_attention(variant) && (cbam_reduction == 0 || channels % cbam_reduction != 0)) {
    throw ConfigError("channels (" + std::to_string(channels) + ") must be divisible by cbam_reduction (" +
                      std::to_string(cbam_reduction) + ")");
  }
}

void ModelConfig::check_image_size(std::size_t height, std::size_t width) const {
  if (levels == 2 && (height % downsample_factor != 0 || width % downsample_factor != 0)) {
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by downsample_factor " + std::to_string(downsample_factor));
  }
}

std::size_t parameter_count(const ModelConfig& config) {
  config.validate();
  std::size_t per_level = NcaRule<float>::count_parameters(config.channels, config.hidden, config.perception_kernels);
  if (variant_uses_attention(config.variant)) {
    per_level += CbamParams<float>::count_parameters(config.channels, config.cbam_reduction);
  }
  return per_level * config.levels;
}

template <typename T>
ModelParams<T> ModelParams<T>::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config_ = config;
  const RandomStream root = RandomStream(seed).split(0x6d6f64656cULL);
  for (std::size_t i = 0; i < config.levels; ++i) {
    RandomStream level_rng = root.split(i);
    LevelParams<T> level{NcaRule<T>::create(config.channels, config.hidden, config.perception_kernels,
                                            config.fire_rate, level_rng),
                         std::nullopt};
    if (variant_uses_attention(config.variant)) {
      level.attention = CbamParams<T>::create(config.channels, config.cbam_reduction, level_rng);
    }
    p.levels_.push_back(std::move(level));
  }
  return p;
}

template <typename T>
std::vector<NamedTensor<T>> ModelParams<T>::named_parameters() const {
  std::vector<NamedTensor<T>> out;
  for_each_tensor(levels_, [&](std::string name, const Tensor<T>& t) { out.push_back({std::move(name), t}); });
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor(levels_, [&](const std::string&, const Tensor<T>& t) { n += t.numel(); });
  return n;
}

template <typename T>
void ModelParams<T>::set_requires_grad(bool flag) {
  for_each_tensor(levels_, [&](const std::string&, Tensor<T> t) { t.set_requires_grad(flag); });
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for_each_tensor(levels_, [&](const std::string&, Tensor<T> t) { t.zero_grad(); });
}

template <typename T>
ModelParams<T> ModelParams<T>::replica() const {
  ModelParams p;
  p.config_ = config_;
  p.levels_ = map_tensors(levels_, [](const Tensor<T>& t) { return t.alias(); });
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::clone() const {
  ModelParams p;
  p.config_ = config_;
  p.levels_ = map_tensors(levels_, [](const Tensor<T>& t) {
    auto copy = t.clone();
    copy.set_requires_grad(t.requires_grad());
    return copy;
  });
  return p;
}

template <typename T>
void ModelParams<T>::set_gates_forced_open(bool open) {
  for (auto& level : levels_) {
    if (level.attention) level.attention->gates_forced_open = open;
  }
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.config_ = config_;
  for (const auto& level : levels_) {
    LevelParams<U> l;
    for (const auto& k : level.rule.kernels) l.rule.kernels.push_back(k.template cast<U>());
    l.rule.fc1_weight = level.rule.fc1_weight.template cast<U>();
    l.rule.fc1_bias = level.rule.fc1_bias.template cast<U>();
    l.rule.fc2_weight = level.rule.fc2_weight.template cast<U>();
    l.rule.fire_rate = level.rule.fire_rate;
    if (level.attention) {
      CbamParams<U> a;
      a.mlp_w0 = level.attention->mlp_w0.template cast<U>();
      a.mlp_w1 = level.attention->mlp_w1.template cast<U>();
      a.spatial_kernel = level.attention->spatial_kernel.template cast<U>();
      a.spatial_bias = level.attention->spatial_bias.template cast<U>();
      a.reduction = level.attention->reduction;
      a.gates_forced_open = level.attention->gates_forced_open;
      l.attention = std::move(a);
    }
    out.levels_.push_back(std::move(l));
  }
  return out;
}

template <typename T>
Prediction<T> predict_noise(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& x_t, int t,
                            int steps, RandomStream& rng) {
  if (params.config().levels == 2) return two_level(params, image, x_t, t, steps, rng);
  return single_level(params, image, x_t, t, steps, rng);
}

template <typename T>
Prediction<T> predict_noise_basic(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& x_t, int t,
                                  int steps, RandomStream& rng) {
  expect_variant(params, Variant::basic);
  return single_level(params, image, x_t, t, steps, rng);
}

template <typename T>
Prediction<T> predict_noise_cbam(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& x_t, int t,
                                 int steps, RandomStream& rng) {
  expect_variant(params, Variant::cbam);
  return single_level(params, image, x_t, t, steps, rng);
}

template <typename T>
Prediction<T> predict_noise_multi(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& x_t, int t,
                                  int steps, RandomStream& rng) {
  expect_variant(params, Variant::multi);
  return two_level(params, image, x_t, t, steps, rng);
}

template <typename T>
Prediction<T> predict_noise_multi_cbam(const ModelParams<T>& params, const Tensor<T>& image, const Tensor<T>& x_t,
                                       int t, int steps, RandomStream& rng) {
  expect_variant(params, Variant::multi_cbam);
  return two_level(params, image, x_t, t, steps, rng);
}

template class ModelParams<float>;
template class ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

#define NCADIFF_INSTANTIATE_PREDICT(T, NAME)                                                                  \
  template Prediction<T> NAME(const ModelParams<T>&, const Tensor<T>&, const Tensor<T>&, int, int, RandomStream&);

NCADIFF_INSTANTIATE_PREDICT(float, predict_noise)
NCADIFF_INSTANTIATE_PREDICT(double, predict_noise)
NCADIFF_INSTANTIATE_PREDICT(float, predict_noise_basic)
NCADIFF_INSTANTIATE_PREDICT(double, predict_noise_basic)
NCADIFF_INSTANTIATE_PREDICT(float, predict_noise_cbam)
NCADIFF_INSTANTIATE_PREDICT(double, predict_noise_cbam)
NCADIFF_INSTANTIATE_PREDICT(float, predict_noise_multi)
NCADIFF_INSTANTIATE_PREDICT(double, predict_noise_multi)
NCADIFF_INSTANTIATE_PREDICT(float, predict_noise_multi_cbam)
NCADIFF_INSTANTIATE_PREDICT(double, predict_noise_multi_cbam)

}  // namespace ncadiff
