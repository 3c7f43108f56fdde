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

#include "ncadiff/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ncadiff/errors.hpp"

namespace ncadiff {
namespace {

std::uint8_t quantize(float v) {
  const float px = std::round((std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(std::clamp(px, 0.0f, 255.0f));
}

}  // namespace

Image8 read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = color ? 3 : 1;
  if (out.width == 0 || out.height == 0) {
    png_image_free(&img);
    throw DataError("PNG " + path.string() + " has zero size");
  }
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string message = img.message;
    png_image_free(&img);
    throw DataError("cannot decode PNG " + path.string() + ": " + message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw DataError("write_png: only gray or RGB images");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    const std::string message = img.message;
    png_image_free(&img);
    throw DataError("cannot write PNG " + path.string() + ": " + message);
  }
}

Tensor<float> resize_bilinear(const Image8& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DataError("resize: target size must be positive");
  Tensor<float> out(Shape{image.channels, height, width});
  auto o = out.values();
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double ly = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double lx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double top = image.at(y0, x0, c) + lx * (image.at(y0, x1, c) - image.at(y0, x0, c));
        const double bottom = image.at(y1, x0, c) + lx * (image.at(y1, x1, c) - image.at(y1, x0, c));
        o[(c * height + y) * width + x] = static_cast<float>(top + ly * (bottom - top));
      }
    }
  }
  return out;
}

Tensor<float> resize_nearest(const Image8& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DataError("resize: target size must be positive");
  Tensor<float> out(Shape{1, height, width});
  auto o = out.values();
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(y * image.height / height, image.height - 1);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(x * image.width / width, image.width - 1);
      o[y * width + x] = image.at(sy, sx, 0);
    }
  }
  return out;
}

Image8 to_gray_image(const Tensor<float>& plane) {
  if (plane.rank() != 3 || plane.dim(0) != 1) throw ShapeError("to_gray_image: expected [1,H,W], got " + shape_string(plane.shape()));
  Image8 img{plane.dim(2), plane.dim(1), 1, {}};
  img.pixels.resize(plane.numel());
  const auto v = plane.values();
  for (std::size_t i = 0; i < v.size(); ++i) img.pixels[i] = quantize(v[i]);
  return img;
}

Image8 to_rgb_image(const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("to_rgb_image: expected [3,H,W], got " + shape_string(image.shape()));
  const std::size_t h = image.dim(1);
  const std::size_t w = image.dim(2);
  Image8 img{w, h, 3, {}};
  img.pixels.resize(3 * h * w);
  const auto v = image.values();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < h * w; ++i) img.pixels[i * 3 + c] = quantize(v[c * h * w + i]);
  }
  return img;
}

}  // namespace ncadiff
