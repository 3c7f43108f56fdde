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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ncadiff/config.hpp"
#include "ncadiff/models.hpp"
#include "ncadiff/training.hpp"

namespace ncadiff {

inline constexpr char kCheckpointMagic[8] = {'N', 'C', 'A', 'D', 'I', 'F', 'F', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// On-disk content before interpretation.
///
/// Layout: magic "NCADIFF1", u32 version, u64 length + config text, u64 tensor
/// count, then per tensor u64 name length + name, u64 rank, u64 dims, raw
/// float32 values. All integers and floats little-endian.
struct CheckpointFile {
  std::string config_text;
  std::vector<NamedTensor<float>> tensors;
};

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file);
/// Throws CheckpointError with kind io, bad_magic, version_mismatch, truncated
/// or malformed.
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

struct Checkpoint {
  RunConfig config;
  ModelParams<float> params;
  std::optional<OptimState<float>> optim;
};

/// Optimizer moments are stored as tensors "opt.m/<name>" and "opt.v/<name>";
/// the step counter is stored in the config text as "optim.step".
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const ModelParams<float>& params,
                     const OptimState<float>* optim = nullptr);

/// overrides are applied on top of the stored config before the model is
/// rebuilt, so overriding an architecture key yields a name-set or shape
/// mismatch rather than a silently different model.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// Copies the stored tensors into target. Throws CheckpointError
/// (name_set_mismatch) listing missing and unexpected names, or (malformed) on a
/// shape mismatch.
void assign_parameters(ModelParams<float>& target, const std::vector<NamedTensor<float>>& stored);

}  // namespace ncadiff
