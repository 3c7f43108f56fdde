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

#include <doctest.h>

#include <cmath>

#include "ncadiff/cbam.hpp"
#include "ncadiff/errors.hpp"
#include "support/oracles.hpp"

using namespace ncadiff;

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

CbamParams<double> random_params(std::size_t c, std::size_t r, RandomStream& rng) {
  auto p = CbamParams<double>::zeros(c, r);
  p.mlp_w0 = oracle::random_tensor<double>(p.mlp_w0.shape(), rng);
  p.mlp_w1 = oracle::random_tensor<double>(p.mlp_w1.shape(), rng);
  p.spatial_kernel = oracle::random_tensor<double>(p.spatial_kernel.shape(), rng, -0.3, 0.3);
  p.spatial_bias = oracle::random_tensor<double>({1}, rng);
  return p;
}

// MLP(v) = W1^T relu(W0^T v) written with explicit loops.
std::vector<double> mlp(const std::vector<double>& v, const CbamParams<double>& p) {
  const std::size_t c = p.channels(), mid = p.mlp_w0.dim(1);
  std::vector<double> hidden(mid, 0.0), out(c, 0.0);
  for (std::size_t j = 0; j < mid; ++j) {
    for (std::size_t i = 0; i < c; ++i) hidden[j] += v[i] * p.mlp_w0.values()[i * mid + j];
    hidden[j] = std::max(hidden[j], 0.0);
  }
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < mid; ++j) out[i] += hidden[j] * p.mlp_w1.values()[j * c + i];
  }
  return out;
}

}  // namespace

TEST_CASE("parameter counts") {
  CHECK(CbamParams<float>::count_parameters(64, 4) == 2 * 64 * 16 + 99);
  CHECK(CbamParams<float>::count_parameters(64, 4) == 2147);
  CHECK(CbamParams<float>::count_parameters(16, 4) == 227);
  RandomStream rng(1);
  CHECK(CbamParams<float>::create(32, 8, rng).parameter_count() == CbamParams<float>::count_parameters(32, 8));
  CHECK_THROWS_AS(CbamParams<float>::count_parameters(10, 4), ArgumentError);
  CHECK_THROWS_AS(CbamParams<float>::zeros(8, 0), ArgumentError);
}

TEST_CASE("fresh attention: MLP small and nonzero, spatial gate exactly one half") {
  RandomStream rng(2);
  const auto p = CbamParams<float>::create(16, 4, rng);
  for (float v : p.mlp_w0.values()) CHECK(std::abs(v) <= 0.05f);
  for (float v : p.spatial_kernel.values()) CHECK(v == 0.0f);
  auto x = oracle::random_tensor<float>({16, 5, 5}, rng);
  const auto gate = spatial_attention(x, p);
  for (float v : gate.values()) CHECK(v == 0.5f);
}

TEST_CASE("all-zero attention scales the input by exactly one quarter") {
  RandomStream rng(3);
  const auto p = CbamParams<double>::zeros(8, 2);
  auto x = oracle::random_tensor<double>({8, 4, 3}, rng);
  const auto y = cbam_apply(x, p);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == 0.25 * x.values()[i]);
}

TEST_CASE("forced-open gates make the block the identity") {
  RandomStream rng(4);
  auto p = random_params(8, 4, rng);
  p.gates_forced_open = true;
  auto x = oracle::random_tensor<double>({8, 6, 6}, rng);
  CHECK(oracle::bitwise_equal(cbam_apply(x, p), x));
}

TEST_CASE("channel and spatial attention match loop oracles") {
  RandomStream rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.uniform_index(2);
    const std::size_t c = r * (1 + rng.uniform_index(4));
    const std::size_t H = 1 + rng.uniform_index(6), W = 1 + rng.uniform_index(6);
    const auto p = random_params(c, r, rng);
    auto x = oracle::random_tensor<double>({c, H, W}, rng);

    std::vector<double> avg(c, 0.0), mx(c, -1e300);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < H * W; ++i) {
        avg[ch] += x.values()[ch * H * W + i] / static_cast<double>(H * W);
        mx[ch] = std::max(mx[ch], x.values()[ch * H * W + i]);
      }
    }
    const auto a = mlp(avg, p), m = mlp(mx, p);
    const auto gate = channel_attention(x, p);
    for (std::size_t ch = 0; ch < c; ++ch) CHECK(gate.values()[ch] == doctest::Approx(sigmoid(a[ch] + m[ch])));

    Tensor<double> planes({2, H, W});
    for (std::size_t i = 0; i < H * W; ++i) {
      double s = 0.0, best = -1e300;
      for (std::size_t ch = 0; ch < c; ++ch) {
        s += x.values()[ch * H * W + i];
        best = std::max(best, x.values()[ch * H * W + i]);
      }
      planes.values()[i] = s / static_cast<double>(c);
      planes.values()[H * W + i] = best;
    }
    const auto logits = oracle::conv2d(planes, p.spatial_kernel, ConvMode::dense, Padding::replicate, &p.spatial_bias);
    const auto sgate = spatial_attention(x, p);
    for (std::size_t i = 0; i < H * W; ++i) {
      CHECK(sgate.values()[i] == doctest::Approx(sigmoid(logits.values()[i])));
    }

    // cbam_apply: spatial gate computed on the channel-gated map.
    Tensor<double> gated({c, H, W});
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < H * W; ++i) {
        gated.values()[ch * H * W + i] = x.values()[ch * H * W + i] * gate.values()[ch];
      }
    }
    const auto s2 = spatial_attention(gated, p);
    const auto y = cbam_apply(x, p);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < H * W; ++i) {
        CHECK(y.values()[ch * H * W + i] == doctest::Approx(gated.values()[ch * H * W + i] * s2.values()[i]));
      }
    }
  }
}

TEST_CASE("cbam_apply gradients match central differences") {
  RandomStream rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 4, H = 1 + rng.uniform_index(4), W = 1 + rng.uniform_index(4);
    auto p = random_params(c, 2, rng);
    auto x = oracle::random_tensor<double>({c, H, W}, rng);
    auto w = oracle::random_tensor<double>({c, H, W}, rng);
    const double err = oracle::fd_max_rel_error([&] { return oracle::project(cbam_apply(x, p), w); },
                                                {x, p.mlp_w0, p.mlp_w1, p.spatial_kernel, p.spatial_bias});
    CHECK(err < 1e-5);
  }
}

TEST_CASE("shape errors") {
  const auto p = CbamParams<double>::zeros(8, 4);
  CHECK_THROWS_AS(channel_attention(Tensor<double>({4, 2, 2}), p), ShapeError);
  CHECK_THROWS_AS(spatial_attention(Tensor<double>({4, 2}), p), ShapeError);
}
