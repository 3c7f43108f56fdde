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

#include "ncadiff/errors.hpp"
#include "ncadiff/ops.hpp"
#include "support/oracles.hpp"

using namespace ncadiff;
using oracle::random_tensor;

namespace {

constexpr int kTrials = 100;
constexpr double kGradTol = 1e-5;

Shape random_chw(RandomStream& rng, std::size_t max_c = 4, std::size_t max_hw = 6) {
  return {1 + rng.uniform_index(max_c), 1 + rng.uniform_index(max_hw), 1 + rng.uniform_index(max_hw)};
}

// Values bounded away from zero so a perturbation never crosses a ReLU kink.
Tensor<double> away_from_zero(const Shape& shape, RandomStream& rng) {
  Tensor<double> t(shape);
  for (auto& v : t.values()) v = (0.1 + 0.9 * rng.uniform()) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  return t;
}

// Distinct values so max pooling has a unique winner with a margin.
Tensor<double> distinct_values(const Shape& shape, RandomStream& rng) {
  Tensor<double> t(shape);
  auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.01 * static_cast<double>(i);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_index(i)]);
  return t;
}

}  // namespace

TEST_CASE("elementwise forward values and broadcasting forms") {
  Tensor<double> a({2, 2, 2}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(add(a, Tensor<double>::scalar(1)).values()[7] == 9);
  const auto per_channel = mul(a, Tensor<double>({2}, std::vector<double>{10, 100}));
  CHECK(per_channel.values()[0] == 10);
  CHECK(per_channel.values()[4] == 500);
  const auto plane = sub(a, Tensor<double>({1, 2, 2}, std::vector<double>{1, 1, 2, 2}));
  CHECK(plane.values()[3] == 2);
  CHECK(plane.values()[7] == 6);
  CHECK_THROWS_AS(add(a, Tensor<double>({3})), ShapeError);
  CHECK(relu(Tensor<double>({2}, std::vector<double>{-1, 2})).values()[0] == 0);
  CHECK(sigmoid(Tensor<double>::scalar(0)).item() == 0.5);
  CHECK(scale(a, 0.5).values()[1] == 1);
}

TEST_CASE("elementwise gradients match central differences") {
  RandomStream rng(1);
  for (int trial = 0; trial < kTrials; ++trial) {
    const Shape s = random_chw(rng);
    auto a = random_tensor<double>(s, rng);
    const int form = trial % 4;
    Shape bs = s;
    if (form == 1) bs = {1};
    if (form == 2) bs = {s[0]};
    if (form == 3) bs = {1, s[1], s[2]};
    auto b = random_tensor<double>(bs, rng);
    auto w = random_tensor<double>(s, rng);
    CHECK(oracle::fd_max_rel_error([&] { return oracle::project(add(a, b), w); }, {a, b}) < kGradTol);
    CHECK(oracle::fd_max_rel_error([&] { return oracle::project(sub(a, b), w); }, {a, b}) < kGradTol);
    CHECK(oracle::fd_max_rel_error([&] { return oracle::project(mul(a, b), w); }, {a, b}) < kGradTol);
    CHECK(oracle::fd_max_rel_error([&] { return oracle::project(scale(a, 1.7), w); }, {a}) < kGradTol);
    CHECK(oracle::fd_max_rel_error([&] { return oracle::project(sigmoid(a), w); }, {a}) < kGradTol);
    auto r = away_from_zero(s, rng);
    CHECK(oracle::fd_max_rel_error([&] { return oracle::project(relu(r), w); }, {r}) < kGradTol);
  }
}

TEST_CASE("affine and pointwise_affine match loop oracles") {
  RandomStream rng(2);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(5), k = 1 + rng.uniform_index(6), m = 1 + rng.uniform_index(6);
    auto x = random_tensor<double>({n, k}, rng);
    auto W = random_tensor<double>({k, m}, rng);
    auto b = random_tensor<double>({m}, rng);
    CHECK(oracle::max_abs_diff(affine(x, W, b), oracle::matmul(x, W, &b)) < 1e-12);
    CHECK(oracle::max_abs_diff(affine(x, W), oracle::matmul(x, W)) < 1e-12);

    // pointwise over [k,H,W] equals the transposed-pixel matrix product
    const std::size_t H = 1 + rng.uniform_index(4), Wd = 1 + rng.uniform_index(4);
    auto img = random_tensor<double>({k, H, Wd}, rng);
    Tensor<double> pixels({H * Wd, k});
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t p = 0; p < H * Wd; ++p) pixels.values()[p * k + c] = img.values()[c * H * Wd + p];
    }
    const auto expected = oracle::matmul(pixels, W, &b);
    const auto got = pointwise_affine(img, W, b);
    double diff = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t p = 0; p < H * Wd; ++p) {
        diff = std::max(diff, std::abs(got.values()[c * H * Wd + p] - expected.values()[p * m + c]));
      }
    }
    CHECK(diff < 1e-12);
  }
  CHECK_THROWS_AS(affine(Tensor<double>({2, 3}), Tensor<double>({4, 2})), ShapeError);
  CHECK_THROWS_AS(pointwise_affine(Tensor<double>({2, 3, 3}), Tensor<double>({2, 2}), Tensor<double>({3})),
                  ShapeError);
}

TEST_CASE("affine gradients match central differences") {
  RandomStream rng(3);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(4), k = 1 + rng.uniform_index(4), m = 1 + rng.uniform_index(4);
    auto x = random_tensor<double>({n, k}, rng);
    auto W = random_tensor<double>({k, m}, rng);
    auto b = random_tensor<double>({m}, rng);
    auto w = random_tensor<double>({n, m}, rng);
    CHECK(oracle::fd_max_rel_error([&] { return oracle::project(affine(x, W, b), w); }, {x, W, b}) < kGradTol);
    const std::size_t H = 1 + rng.uniform_index(3), Wd = 1 + rng.uniform_index(3);
    auto img = random_tensor<double>({k, H, Wd}, rng);
    auto w2 = random_tensor<double>({m, H, Wd}, rng);
    CHECK(oracle::fd_max_rel_error([&] { return oracle::project(pointwise_affine(img, W, b), w2); }, {img, W, b}) <
          kGradTol);
  }
}

TEST_CASE("conv2d equals the nested-loop oracle exactly in double") {
  RandomStream rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const Shape s = random_chw(rng, 6, 6);
    const auto mode = trial % 2 ? ConvMode::dense : ConvMode::depthwise;
    const auto padding = (trial / 2) % 2 ? Padding::circular : Padding::replicate;
    const std::size_t k = 1 + 2 * rng.uniform_index(3);
    const std::size_t c_out = mode == ConvMode::depthwise ? s[0] : 1 + rng.uniform_index(6);
    const Shape ks = mode == ConvMode::depthwise ? Shape{s[0], k, k} : Shape{c_out, s[0], k, k};
    auto x = random_tensor<double>(s, rng);
    auto kern = random_tensor<double>(ks, rng);
    if (mode == ConvMode::dense && rng.bernoulli(0.5)) {
      auto b = random_tensor<double>({c_out}, rng);
      REQUIRE(oracle::bitwise_equal(conv2d(x, kern, mode, padding, b), oracle::conv2d(x, kern, mode, padding, &b)));
    } else {
      REQUIRE(oracle::bitwise_equal(conv2d(x, kern, mode, padding), oracle::conv2d(x, kern, mode, padding)));
    }
  }
}

TEST_CASE("conv2d gradients match central differences") {
  RandomStream rng(5);
  for (int trial = 0; trial < kTrials; ++trial) {
    const Shape s = random_chw(rng, 3, 5);
    const auto mode = trial % 2 ? ConvMode::dense : ConvMode::depthwise;
    const auto padding = (trial / 2) % 2 ? Padding::circular : Padding::replicate;
    const std::size_t k = trial % 3 == 0 ? 1 : 3;
    const std::size_t c_out = mode == ConvMode::depthwise ? s[0] : 1 + rng.uniform_index(3);
    auto x = random_tensor<double>(s, rng);
    auto kern = random_tensor<double>(mode == ConvMode::depthwise ? Shape{s[0], k, k} : Shape{c_out, s[0], k, k}, rng);
    auto w = random_tensor<double>({c_out, s[1], s[2]}, rng);
    if (mode == ConvMode::dense) {
      auto b = random_tensor<double>({c_out}, rng);
      CHECK(oracle::fd_max_rel_error([&] { return oracle::project(conv2d(x, kern, mode, padding, b), w); },
                                     {x, kern, b}) < kGradTol);
    } else {
      CHECK(oracle::fd_max_rel_error([&] { return oracle::project(conv2d(x, kern, mode, padding), w); }, {x, kern}) <
            kGradTol);
    }
  }
}

TEST_CASE("conv2d known values and errors") {
  // 3x3 identity kernel leaves the input unchanged under both paddings.
  Tensor<double> x({1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor<double> id({1, 3, 3}, std::vector<double>{0, 0, 0, 0, 1, 0, 0, 0, 0});
  CHECK(oracle::bitwise_equal(conv2d(x, id, ConvMode::depthwise, Padding::replicate), x));
  // Left-neighbour kernel: replicate repeats the edge, circular wraps.
  Tensor<double> left({1, 3, 3}, std::vector<double>{0, 0, 0, 1, 0, 0, 0, 0, 0});
  const auto rep = conv2d(x, left, ConvMode::depthwise, Padding::replicate);
  const auto circ = conv2d(x, left, ConvMode::depthwise, Padding::circular);
  CHECK(rep.values()[0] == 1);
  CHECK(circ.values()[0] == 3);
  CHECK(rep.values()[2] == 2);
  CHECK_THROWS_AS(conv2d(x, Tensor<double>({1, 2, 2}), ConvMode::depthwise, Padding::replicate), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor<double>({2, 3, 3}), ConvMode::depthwise, Padding::replicate), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor<double>({1, 2, 3, 3}), ConvMode::dense, Padding::replicate), ShapeError);
}

TEST_CASE("pool equals the nested-loop oracle exactly in double") {
  RandomStream rng(6);
  const PoolKind kinds[] = {PoolKind::global_avg, PoolKind::global_max, PoolKind::channel_avg, PoolKind::channel_max,
                            PoolKind::spatial_avg};
  for (int trial = 0; trial < 1000; ++trial) {
    const auto kind = kinds[trial % 5];
    Shape s = random_chw(rng, 6, 6);
    std::size_t k = 1;
    if (kind == PoolKind::spatial_avg) {
      k = 1 + rng.uniform_index(3);
      s[1] = k * (1 + rng.uniform_index(6 / k));
      s[2] = k * (1 + rng.uniform_index(6 / k));
    }
    auto x = random_tensor<double>(s, rng);
    REQUIRE(oracle::bitwise_equal(pool(x, kind, k), oracle::pool(x, kind, k)));
  }
}

TEST_CASE("pool gradients match central differences") {
  RandomStream rng(7);
  const PoolKind kinds[] = {PoolKind::global_avg, PoolKind::global_max, PoolKind::channel_avg, PoolKind::channel_max,
                            PoolKind::spatial_avg};
  for (int trial = 0; trial < kTrials; ++trial) {
    for (auto kind : kinds) {
      Shape s = random_chw(rng, 3, 4);
      std::size_t k = 1;
      if (kind == PoolKind::spatial_avg) {
        k = 2;
        s[1] = 2 * (1 + rng.uniform_index(2));
        s[2] = 2 * (1 + rng.uniform_index(2));
      }
      auto x = distinct_values(s, rng);
      const auto y = pool(x, kind, k);
      auto w = random_tensor<double>(y.shape(), rng);
      CHECK(oracle::fd_max_rel_error([&] { return oracle::project(pool(x, kind, k), w); }, {x}, 1e-4) < kGradTol);
    }
  }
}

TEST_CASE("max pooling routes ties to the first index") {
  Tensor<double> x({1, 1, 3}, std::vector<double>{2, 2, 1});
  x.set_requires_grad(true);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  tape.backward(sum(pool(x, PoolKind::global_max)));
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("spatial average pooling rejects indivisible sizes") {
  CHECK_THROWS_AS(pool(Tensor<double>({1, 5, 4}), PoolKind::spatial_avg, 2), ShapeError);
  CHECK_THROWS_AS(pool(Tensor<double>({1, 4, 4}), PoolKind::spatial_avg, 0), ShapeError);
}

TEST_CASE("bilinear upsampling matches the weights form and preserves constants") {
  RandomStream rng(8);
  for (int trial = 0; trial < kTrials; ++trial) {
    const Shape s = random_chw(rng, 3, 5);
    const std::size_t f = 1 + rng.uniform_index(4);
    auto x = random_tensor<double>(s, rng);
    CHECK(oracle::max_abs_diff(resample(x, f, ResampleKind::bilinear_up), oracle::bilinear_up(x, f)) < 1e-12);
    Tensor<double> c(s, -0.37);
    const auto up = resample(c, f, ResampleKind::bilinear_up);
    for (double v : up.values()) REQUIRE(v == -0.37);
  }
  CHECK(oracle::bitwise_equal(resample(Tensor<double>({1, 2, 2}, 1.0), 1, ResampleKind::bilinear_up),
                              Tensor<double>({1, 2, 2}, 1.0)));
  CHECK_THROWS_AS(resample(Tensor<double>({1, 2, 2}), 0, ResampleKind::bilinear_up), ShapeError);
}

TEST_CASE("nearest upsampling repeats each source pixel") {
  Tensor<double> x({1, 1, 2}, std::vector<double>{1, 2});
  const auto y = resample(x, 2, ResampleKind::nearest_up);
  CHECK(y.shape() == Shape{1, 2, 4});
  CHECK(std::vector<double>(y.values().begin(), y.values().end()) == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2});
}

TEST_CASE("resample and structural op gradients match central differences") {
  RandomStream rng(9);
  for (int trial = 0; trial < kTrials; ++trial) {
    const Shape s = random_chw(rng, 3, 4);
    const std::size_t f = 1 + rng.uniform_index(3);
    auto x = random_tensor<double>(s, rng);
    const auto kind = trial % 2 ? ResampleKind::nearest_up : ResampleKind::bilinear_up;
    auto w = random_tensor<double>({s[0], s[1] * f, s[2] * f}, rng);
    CHECK(oracle::fd_max_rel_error([&] { return oracle::project(resample(x, f, kind), w); }, {x}) < kGradTol);

    auto y = random_tensor<double>({1 + rng.uniform_index(3), s[1], s[2]}, rng);
    auto wc = random_tensor<double>({s[0] + y.dim(0), s[1], s[2]}, rng);
    CHECK(oracle::fd_max_rel_error([&] { return oracle::project(concat<double>({x, y}), wc); }, {x, y}) < kGradTol);

    const std::size_t begin = rng.uniform_index(s[0]);
    const std::size_t count = 1 + rng.uniform_index(s[0] - begin);
    auto ws = random_tensor<double>({count, s[1], s[2]}, rng);
    CHECK(oracle::fd_max_rel_error([&] { return oracle::project(slice(x, begin, count), ws); }, {x}) < kGradTol);

    auto wr = random_tensor<double>({x.numel()}, rng);
    CHECK(oracle::fd_max_rel_error([&] { return oracle::project(reshape(x, {x.numel()}), wr); }, {x}) < kGradTol);

    auto b = random_tensor<double>(s, rng);
    CHECK(oracle::fd_max_rel_error([&] { return mean(x); }, {x}) < kGradTol);
    CHECK(oracle::fd_max_rel_error([&] { return mse(x, b); }, {x, b}) < kGradTol);
  }
}

TEST_CASE("structural ops: values and errors") {
  Tensor<double> a({1, 1, 2}, std::vector<double>{1, 2});
  Tensor<double> b({2, 1, 2}, std::vector<double>{3, 4, 5, 6});
  const auto c = concat<double>({a, b});
  CHECK(c.shape() == Shape{3, 1, 2});
  CHECK(c.values()[5] == 6);
  CHECK(slice(c, 1, 1).values()[0] == 3);
  CHECK_THROWS_AS(slice(c, 2, 2), ShapeError);
  CHECK_THROWS_AS(concat<double>({a, Tensor<double>({1, 2, 2})}), ShapeError);
  CHECK_THROWS_AS(reshape(c, {4}), ShapeError);
  CHECK(sum(c).item() == 21);
  CHECK(mean(c).item() == 3.5);
  CHECK(mse(a, Tensor<double>({1, 1, 2}, std::vector<double>{2, 4})).item() == 2.5);
  CHECK_THROWS_AS(mse(a, b), ShapeError);
}

TEST_CASE("corrupted backward hook perturbs dense weight gradients only") {
  RandomStream rng(10);
  auto x = random_tensor<double>({3, 4}, rng);
  auto W = random_tensor<double>({4, 2}, rng);
  auto w = random_tensor<double>({3, 2}, rng);
  debug::set_corrupt_backward(true);
  const double err = oracle::fd_max_rel_error([&] { return oracle::project(affine(x, W), w); }, {W});
  debug::set_corrupt_backward(false);
  CHECK(err > 5e-3);
  CHECK(oracle::fd_max_rel_error([&] { return oracle::project(affine(x, W), w); }, {W}) < kGradTol);
}
