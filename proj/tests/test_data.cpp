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

#include <algorithm>
#include <cmath>

#include "ncadiff/errors.hpp"
#include "ncadiff/image_io.hpp"
#include "ncadiff/metrics.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace ncadiff;
using testing::TempDir;

namespace {

Tensor<float> plane(std::initializer_list<float> v) { return Tensor<float>({1, 1, v.size()}, std::vector<float>(v)); }

}  // namespace

TEST_CASE("synthetic samples: shapes, ranges and coverage") {
  const auto data = synth_dataset(12, 32, 24, 7);
  REQUIRE(data.size() == 12);
  for (const auto& s : data) {
    CHECK(s.image.shape() == Shape{3, 32, 24});
    CHECK(s.mask.shape() == Shape{1, 32, 24});
    for (float v : s.image.values()) CHECK((v >= -1.0f && v <= 1.0f));
    for (float v : s.mask.values()) CHECK((v == 1.0f || v == -1.0f));
    const double frac = mask_fraction(s.mask);
    CHECK((frac >= 0.05 && frac <= 0.6));
    double in = 0.0, out = 0.0;
    std::size_t n_in = 0;
    for (std::size_t i = 0; i < 32 * 24; ++i) {
      const double lum = s.image.values()[i] + s.image.values()[768 + i] + s.image.values()[1536 + i];
      if (s.mask.values()[i] > 0.0f) {
        in += lum;
        ++n_in;
      } else {
        out += lum;
      }
    }
    CHECK(in / n_in < out / (768 - n_in));
  }
  CHECK(data[3].id == "synth_0003");
  CHECK_THROWS_AS(synth_dataset(1, 8, 32, 0), DataError);
}

TEST_CASE("synthetic sample i depends only on seed and index") {
  const auto a = synth_dataset(3, 16, 16, 1);
  const auto b = synth_dataset(6, 16, 16, 1);
  const auto c = synth_dataset(3, 16, 16, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(oracle::bitwise_equal(a[i].image, b[i].image));
    CHECK(oracle::bitwise_equal(a[i].mask, b[i].mask));
  }
  CHECK_FALSE(oracle::bitwise_equal(a[0].image, c[0].image));
}

TEST_CASE("PNG round-trip for gray and RGB images") {
  TempDir dir;
  for (std::size_t channels : {1, 3}) {
    Image8 img{5, 3, channels, {}};
    for (std::size_t i = 0; i < 15 * channels; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 17 % 256));
    const auto path = dir / ("img" + std::to_string(channels) + ".png");
    write_png(path, img);
    const auto back = read_png(path);
    CHECK(back.width == 5);
    CHECK(back.height == 3);
    CHECK(back.channels == channels);
    CHECK(back.pixels == img.pixels);
  }
  CHECK_THROWS_AS(read_png(dir / "missing.png"), DataError);
  testing::write_file(dir / "junk.png", "not a png");
  CHECK_THROWS_AS(read_png(dir / "junk.png"), DataError);
}

TEST_CASE("resizing") {
  const Image8 row{2, 1, 1, {0, 255}};
  const auto up = resize_bilinear(row, 1, 4);
  const float expected[] = {0.0f, 63.75f, 191.25f, 255.0f};
  for (std::size_t i = 0; i < 4; ++i) CHECK(up.values()[i] == doctest::Approx(expected[i]));
  const auto same = resize_bilinear(row, 1, 2);
  CHECK(same.values()[0] == 0.0f);
  CHECK(same.values()[1] == 255.0f);
  const auto near = resize_nearest(row, 1, 4);
  const float nearest[] = {0.0f, 0.0f, 255.0f, 255.0f};
  for (std::size_t i = 0; i < 4; ++i) CHECK(near.values()[i] == nearest[i]);
}

TEST_CASE("saved samples load back with paired masks") {
  TempDir dir;
  const auto data = synth_dataset(3, 16, 20, 5);
  for (const auto& s : data) save_sample(s, dir / "images", dir / "masks");
  std::filesystem::rename(dir / "masks/synth_0001.png", dir / "masks/synth_0001_segmentation.png");

  const auto loaded = load_dataset(dir / "images", dir / "masks", 16, 20);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].id == data[i].id);
    CHECK(oracle::bitwise_equal(loaded[i].mask, data[i].mask));
    CHECK(oracle::max_abs_diff(loaded[i].image.cast<double>(), data[i].image.cast<double>()) <= 1.0 / 127.5 + 1e-6);
  }
  const auto small = load_dataset(dir / "images", dir / "masks", 8, 10);
  CHECK(small[0].image.shape() == Shape{3, 8, 10});
  CHECK(load_mask(dir / "masks/synth_0000.png", 8, 10).shape() == Shape{1, 8, 10});
  CHECK(load_image(dir / "images/synth_0000.png", 4, 4).shape() == Shape{3, 4, 4});
}

TEST_CASE("unpaired files and missing directories are data errors naming the path") {
  TempDir dir;
  const auto data = synth_dataset(2, 16, 16, 6);
  for (const auto& s : data) save_sample(s, dir / "images", dir / "masks");
  std::filesystem::remove(dir / "masks/synth_0001.png");
  try {
    load_dataset(dir / "images", dir / "masks", 16, 16);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("synth_0001.png") != std::string::npos);
  }
  std::filesystem::remove(dir / "images/synth_0001.png");
  std::filesystem::copy(dir / "masks/synth_0000.png", dir / "masks/extra.png");
  CHECK_THROWS_AS(load_dataset(dir / "images", dir / "masks", 16, 16), DataError);
  try {
    load_dataset(dir / "images", dir / "nowhere", 16, 16);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("nowhere") != std::string::npos);
  }
}

TEST_CASE("split files") {
  TempDir dir;
  testing::write_file(dir / "split.txt", "# header\ntrain a\ntrain b\n\nval c  # trailing\ntest d\n");
  const auto spec = SplitSpec::read(dir / "split.txt");
  CHECK(spec.train == std::vector<std::string>{"a", "b"});
  CHECK(spec.val == std::vector<std::string>{"c"});
  CHECK(spec.ids("test") == std::vector<std::string>{"d"});
  CHECK_NOTHROW(spec.validate({"a", "b", "c", "d"}));
  CHECK_THROWS_AS(spec.validate({"a", "b", "c", "d", "e"}), DataError);
  CHECK_THROWS_AS(spec.validate({"a", "b", "c"}), DataError);
  CHECK_THROWS_AS(spec.ids("holdout"), DataError);

  SplitSpec overlap = spec;
  overlap.test.push_back("a");
  CHECK_THROWS_AS(overlap.validate({"a", "b", "c", "d"}), DataError);

  testing::write_file(dir / "bad.txt", "train a\nholdout b\n");
  CHECK_THROWS_AS(SplitSpec::read(dir / "bad.txt"), DataError);
  CHECK_THROWS_AS(SplitSpec::read(dir / "none.txt"), DataError);

  Dataset data;
  for (const char* id : {"a", "b", "c", "d"}) data.push_back({Tensor<float>({3, 1, 1}), Tensor<float>({1, 1, 1}), id});
  const auto train = select_split(data, spec, "train");
  REQUIRE(train.size() == 2);
  CHECK(train[1].id == "b");
  CHECK(select_split(data, std::nullopt, "all").size() == 4);
  CHECK_THROWS_AS(select_split(data, std::nullopt, "test"), DataError);
}

TEST_CASE("dice and IoU") {
  auto o = dice_iou(plane({1, 1, -1, -1}), plane({1, -1, 1, -1}));
  CHECK(o.dice == doctest::Approx(0.5));
  CHECK(o.iou == doctest::Approx(1.0 / 3.0));
  o = dice_iou(plane({-1, -1}), plane({-1, -1}));
  CHECK(o.dice == 1.0);
  CHECK(o.iou == 1.0);
  o = dice_iou(plane({1, -1}), plane({-1, -1}));
  CHECK(o.dice == 0.0);
  CHECK(o.iou == 0.0);
  o = dice_iou(plane({0.3f, 0.0f, 1, 1}), plane({1, 1, 1, -1}));
  CHECK(o.dice == doctest::Approx(4.0 / 6.0));
  CHECK(o.iou == doctest::Approx(0.5));
  CHECK_THROWS(dice_iou(plane({1}), plane({1, 1})));
}

TEST_CASE("ensemble averages clipped chains run on split streams") {
  const auto data = synth_dataset(1, 16, 16, 8);
  const auto sched = make_schedule(10);
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.hidden = 8;
  cfg.n_steps = 2;
  auto model = ModelParams<float>::create(cfg, 1);
  Tensor<float> fc2 = model.levels()[0].rule.fc2_weight;
  RandomStream wrng(2);
  for (auto& v : fc2.values()) v = static_cast<float>(0.2 * wrng.normal());
  const auto predictor = model_predictor(model, sched.steps);

  const RandomStream rng(3);
  const auto result = ensemble_infer(predictor, data[0].image, sched, rng, 3);
  Tensor<double> expected({1, 16, 16});
  for (std::uint64_t r = 0; r < 3; ++r) {
    const auto x0 = reverse_chain(predictor, data[0].image, sched, rng.split(r));
    for (std::size_t i = 0; i < 256; ++i) {
      expected.values()[i] += std::clamp(static_cast<double>(x0.values()[i]), -1.0, 1.0) / 3.0;
    }
  }
  CHECK(oracle::max_abs_diff(result.mean_map.cast<double>(), expected) < 1e-6);
  for (std::size_t i = 0; i < 256; ++i) {
    CHECK(result.mask.values()[i] == (result.mean_map.values()[i] > 0.0f ? 1.0f : -1.0f));
  }
  const auto single = ensemble_infer(predictor, data[0].image, sched, rng, 1);
  const auto first = reverse_chain(predictor, data[0].image, sched, rng.split(0));
  for (std::size_t i = 0; i < 256; ++i) CHECK(single.mean_map.values()[i] == std::clamp(first.values()[i], -1.0f, 1.0f));
  const auto threaded = ensemble_infer(predictor, data[0].image, sched, rng, 3, 2);
  CHECK(oracle::bitwise_equal(threaded.mean_map, result.mean_map));
}

TEST_CASE("oracle predictor evaluation is perfect and the CSV is well formed") {
  const auto data = synth_dataset(3, 16, 16, 9);
  const auto sched = make_schedule(50);
  const auto report = evaluate([&](const SegSample& s) { return oracle_predictor(s.mask, sched); }, data, sched, 4, 2);
  REQUIRE(report.samples.size() == 3);
  CHECK(report.mean_dice == 1.0);
  CHECK(report.mean_iou == 1.0);
  CHECK(report.samples[2].id == "synth_0002");
  CHECK(eval_csv(report) ==
        "id,dice,iou\nsynth_0000,1.000000,1.000000\nsynth_0001,1.000000,1.000000\nsynth_0002,1.000000,1.000000\n"
        "mean,1.000000,1.000000\n");
}
