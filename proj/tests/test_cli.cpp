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

#include "ncadiff/dataset.hpp"
#include "ncadiff/image_io.hpp"
#include "ncadiff/tensor.hpp"
#include "support/cli_run.hpp"
#include "support/tempdir.hpp"

using namespace ncadiff;
using testing::concat;
using testing::read_file;
using testing::run;
using testing::TempDir;

namespace {

const std::vector<std::string> kSmall = {"--channels", "8",  "--hidden",          "16", "--n_steps",  "2",
                                         "--timesteps", "10", "--height",          "16", "--width",    "16",
                                         "--batch_size", "2", "--synthetic_count", "3",  "--runs",     "2"};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::vector<std::string> train_args(const TempDir& dir, const std::string& out, int steps) {
  return concat({"train", "--output_dir", (dir / out).string(), "--total_steps", std::to_string(steps)}, kSmall);
}

}  // namespace

TEST_CASE("train writes one metrics row per step and reruns byte-identically") {
  TempDir dir;
  auto r = run(train_args(dir, "run", 50));
  REQUIRE(r.code == kExitOk);
  const auto csv = read_file(dir / "run/metrics.csv");
  CHECK(count_lines(csv) == 51);
  CHECK(csv.rfind("step,loss_total,loss_n,loss_rgb,wall_ms\n1,", 0) == 0);
  const auto ckpt = read_file(dir / "run/model.ckpt");
  std::filesystem::rename(dir / "run", dir / "first");

  REQUIRE(run(train_args(dir, "run", 50)).code == kExitOk);
  CHECK(read_file(dir / "run/metrics.csv") == csv);
  CHECK(read_file(dir / "run/model.ckpt") == ckpt);
}

TEST_CASE("train writes periodic checkpoints and evaluation logs") {
  TempDir dir;
  const auto r = run(concat(train_args(dir, "run", 4), {"--checkpoint_every", "2", "--eval_every=2", "--runs", "1"}));
  REQUIRE(r.code == kExitOk);
  CHECK(std::filesystem::exists(dir / "run/checkpoint_000002.ckpt"));
  CHECK(std::filesystem::exists(dir / "run/checkpoint_000004.ckpt"));
  CHECK(count_lines(read_file(dir / "run/eval_log.csv")) == 3);
}

TEST_CASE("configuration and data errors exit non-zero with a diagnostic") {
  TempDir dir;
  auto r = run(concat(train_args(dir, "run", 1), {"--fire_rat", "0.5"}));
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("fire_rat") != std::string::npos);

  r = run(concat(train_args(dir, "run", 1),
                 {"--data", "dir", "--image_dir", (dir / "images").string(), "--mask_dir", (dir / "no_masks").string()}));
  CHECK(r.code == kExitData);
  CHECK(r.err.find("images") != std::string::npos);

  std::filesystem::create_directories(dir / "images");
  r = run(concat(train_args(dir, "run", 1),
                 {"--data", "dir", "--image_dir", (dir / "images").string(), "--mask_dir", (dir / "no_masks").string()}));
  CHECK(r.code == kExitData);
  CHECK(r.err.find("no_masks") != std::string::npos);

  r = run({"infer", "--checkpoint", (dir / "absent.ckpt").string(), "--image", "x.png", "--out", "o"});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("absent.ckpt") != std::string::npos);

  CHECK(run({"bogus"}).code == kExitUsage);
  CHECK(run({"infer"}).code == kExitUsage);
  CHECK(run({"params", "--channels"}).code == kExitUsage);
}

TEST_CASE("oracle predictor: infer recovers the mask and eval scores one") {
  TempDir dir;
  REQUIRE(run(concat(train_args(dir, "run", 0), {"--predictor", "oracle"})).code == kExitOk);
  const auto ckpt = (dir / "run/model.ckpt").string();
  const auto data = synth_dataset(3, 16, 16, 0);
  save_sample(data[1], dir / "images", dir / "masks");
  const auto image = (dir / "images/synth_0001.png").string();
  const auto mask = (dir / "masks/synth_0001.png").string();

  auto r = run({"infer", "--checkpoint", ckpt, "--image", image, "--mask", mask, "--out", (dir / "inf").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(read_png(dir / "inf/mask.png").pixels == read_png(mask).pixels);

  r = run({"eval", "--checkpoint", ckpt, "--out", (dir / "eval.csv").string()});
  REQUIRE(r.code == kExitOk);
  const auto csv = read_file(dir / "eval.csv");
  CHECK(count_lines(csv) == 5);
  CHECK(csv.find("mean,1.000000,1.000000\n") != std::string::npos);
  CHECK(r.out.find("mean dice 1.000000") != std::string::npos);

  CHECK(run({"infer", "--checkpoint", ckpt, "--image", image, "--out", (dir / "x").string()}).code == kExitUsage);
}

TEST_CASE("infer, eval and frames are reproducible; the last frame is the single-run mean") {
  TempDir dir;
  REQUIRE(run(train_args(dir, "run", 5)).code == kExitOk);
  const auto ckpt = (dir / "run/model.ckpt").string();
  save_sample(synth_dataset(1, 16, 16, 3)[0], dir / "images", dir / "masks");
  const auto image = (dir / "images/synth_0000.png").string();

  for (const char* name : {"a", "b"}) {
    const std::string base = (dir / name).string();
    REQUIRE(run({"infer", "--checkpoint", ckpt, "--image", image, "--out", base + "/inf", "--runs", "1"}).code ==
            kExitOk);
    REQUIRE(run({"eval", "--checkpoint", ckpt, "--out", base + "/eval.csv"}).code == kExitOk);
    REQUIRE(run({"frames", "--checkpoint", ckpt, "--image", image, "--out", base + "/frames"}).code == kExitOk);
  }
  CHECK(read_file(dir / "a/inf/mask.png") == read_file(dir / "b/inf/mask.png"));
  CHECK(read_file(dir / "a/inf/mean.png") == read_file(dir / "b/inf/mean.png"));
  CHECK(read_file(dir / "a/eval.csv") == read_file(dir / "b/eval.csv"));

  std::size_t frames = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "a/frames")) {
    CHECK(read_file(e.path()) == read_file(dir / "b/frames" / e.path().filename()));
    ++frames;
  }
  CHECK(frames == 10);
  CHECK(read_png(dir / "a/frames/step_0001.png").pixels == read_png(dir / "a/inf/mean.png").pixels);
}

TEST_CASE("params prints the closed-form breakdown") {
  auto r = run({"params"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("total: 132,736") != std::string::npos);
  CHECK(r.out.find("multi_cbam: 269,766") != std::string::npos);
  CHECK(r.out.find("139k") != std::string::npos);
  r = run({"params", "--variant", "multi", "--channels", "16", "--hidden=64"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("total: 8,896") != std::string::npos);
}

TEST_CASE("gradcheck exits zero on correct gradients and three on corrupted ones") {
  auto r = run({"gradcheck", "--variant", "cbam"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("PASS") != std::string::npos);
  debug::set_corrupt_backward(true);
  r = run({"gradcheck", "--variant", "basic"});
  debug::set_corrupt_backward(false);
  CHECK(r.code == kExitVerification);
  CHECK(r.out.find("FAIL") != std::string::npos);
}
