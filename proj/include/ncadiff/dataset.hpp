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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ncadiff/tensor.hpp"

namespace ncadiff {

/// Conditional image in [-1,1] paired with its mask in {-1,+1}.
struct SegSample {
  Tensor<float> image;  // [3,H,W]
  Tensor<float> mask;   // [1,H,W]
  std::string id;
};

using Dataset = std::vector<SegSample>;

/// Explicit train/val/test id lists.
///
/// File format: one "<split> <id>" pair per line, split in {train, val, test};
/// blank lines and '#' comments are ignored.
struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  static SplitSpec read(const std::filesystem::path& path);
  /// Throws DataError unless the lists are disjoint and cover exactly ids.
  void validate(const std::vector<std::string>& ids) const;
  const std::vector<std::string>& ids(std::string_view split) const;
};

/// Images are resized bilinearly and mapped from [0,255] to [-1,1]; masks are
/// resized by nearest neighbour and binarized at half their maximum intensity.
/// A mask matches an image with the same stem, or the stem plus "_segmentation".
Dataset load_dataset(const std::filesystem::path& image_dir, const std::filesystem::path& mask_dir,
                     std::size_t height, std::size_t width, const std::optional<SplitSpec>& split = std::nullopt);

/// Single-file versions of the conversions used by load_dataset.
Tensor<float> load_image(const std::filesystem::path& path, std::size_t height, std::size_t width);
Tensor<float> load_mask(const std::filesystem::path& path, std::size_t height, std::size_t width);

/// Samples whose id appears in the named split, in split-file order. "all"
/// returns the dataset unchanged.
Dataset select_split(const Dataset& data, const std::optional<SplitSpec>& split, std::string_view name);

/// Desk-scale stand-in for dermoscopy data: one or two filled ellipses rendered
/// darker and textured on a lighter noisy background. Sample i depends only on
/// (seed, i); masks cover between 5% and 60% of the image.
Dataset synth_dataset(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed);

/// Writes <id>.png into image_dir (RGB) and mask_dir (0/255 gray).
void save_sample(const SegSample& sample, const std::filesystem::path& image_dir,
                 const std::filesystem::path& mask_dir);

/// Foreground fraction of a {-1,+1} mask.
double mask_fraction(const Tensor<float>& mask);

}  // namespace ncadiff
