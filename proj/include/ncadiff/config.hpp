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

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ncadiff/models.hpp"
#include "ncadiff/training.hpp"

namespace ncadiff {

/// Everything a command needs, read from a line-oriented "key = value" file.
struct RunConfig {
  ModelConfig model;

  int timesteps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  std::size_t batch_size = 8;
  int total_steps = 1000;
  AdamWOptions optim;
  bool rgb_loss = true;
  int eval_every = 0;
  int checkpoint_every = 0;
  bool record_timing = false;

  std::uint64_t seed = 0;
  std::size_t runs = 10;
  std::size_t threads = 1;

  std::string data = "synthetic";  // "synthetic" or "dir"
  std::string image_dir;
  std::string mask_dir;
  std::string split_file;
  std::size_t synthetic_count = 8;
  std::size_t height = 256;
  std::size_t width = 256;
  std::string output_dir = "run";

  std::string predictor = "nca";  // "nca" or "oracle"

  /// Throws ConfigError on any violated constraint.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Omitted keys keep their defaults; "levels" follows the variant unless given
/// explicitly, in which case it must agree. Overrides are applied after the
/// file and win. Throws ConfigError naming the offending key or line.
RunConfig parse_config(std::string_view text, const ConfigOverrides& overrides = {});

/// Every key, one per line, in a fixed order. parse_config inverts it exactly.
std::string serialize_config(const RunConfig& config);

/// Names of all recognised keys.
std::vector<std::string> config_keys();

}  // namespace ncadiff
