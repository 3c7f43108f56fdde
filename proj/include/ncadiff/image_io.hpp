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
#include <vector>

#include "ncadiff/tensor.hpp"

namespace ncadiff {

/// 8-bit interleaved raster with 1 (gray) or 3 (RGB) channels.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
};

/// Decodes gray, gray+alpha, RGB, RGBA or palette PNGs to gray or RGB (alpha dropped).
/// Throws DataError if the file cannot be read or decoded.
Image8 read_png(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image8& image);

/// Half-pixel bilinear resize of every channel; returns [c,H,W] floats in pixel units.
Tensor<float> resize_bilinear(const Image8& image, std::size_t height, std::size_t width);

/// Nearest-neighbour resize of channel 0; returns [1,H,W] in pixel units.
Tensor<float> resize_nearest(const Image8& image, std::size_t height, std::size_t width);

/// Maps a [1,H,W] tensor from [-1,1] to gray pixels, clamping and rounding.
Image8 to_gray_image(const Tensor<float>& plane);

/// Maps a [3,H,W] tensor from [-1,1] to RGB pixels, clamping and rounding.
Image8 to_rgb_image(const Tensor<float>& image);

}  // namespace ncadiff
