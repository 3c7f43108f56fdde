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

#include "ncadiff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "ncadiff/errors.hpp"
#include "ncadiff/image_io.hpp"
#include "ncadiff/random.hpp"

namespace fs = std::filesystem;

namespace ncadiff {
namespace {

constexpr double kMinMaskFraction = 0.05;
constexpr double kMaxMaskFraction = 0.6;
constexpr int kMaxSynthAttempts = 10000;
constexpr std::uint64_t kSynthStream = 0x73796e7468ULL;

std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string mask_key(const fs::path& mask) {
  std::string stem = mask.stem().string();
  constexpr std::string_view suffix = "_segmentation";
  if (stem.size() > suffix.size() && stem.ends_with(suffix)) stem.resize(stem.size() - suffix.size());
  return stem;
}

Tensor<float> normalize_image(const Image8& img, std::size_t height, std::size_t width) {
  Tensor<float> px = resize_bilinear(img, height, width);
  Tensor<float> out(Shape{3, height, width});
  const std::size_t plane = height * width;
  auto o = out.values();
  const auto v = px.values();
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t src = img.channels == 1 ? 0 : c;
    for (std::size_t i = 0; i < plane; ++i) o[c * plane + i] = v[src * plane + i] / 127.5f - 1.0f;
  }
  return out;
}

Tensor<float> binarize_mask(const Image8& img, std::size_t height, std::size_t width) {
  Tensor<float> px = resize_nearest(img, height, width);
  auto v = px.values();
  const float peak = *std::max_element(v.begin(), v.end());
  for (auto& x : v) x = (peak > 0.0f && x >= 0.5f * peak) ? 1.0f : -1.0f;
  return px;
}

struct Ellipse {
  double cx, cy, rx, ry, cos_t, sin_t;

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = (dx * cos_t + dy * sin_t) / rx;
    const double v = (-dx * sin_t + dy * cos_t) / ry;
    return u * u + v * v <= 1.0;
  }
};

SegSample synth_sample(std::size_t height, std::size_t width, RandomStream rng, std::string id) {
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  Tensor<float> mask(Shape{1, height, width}, -1.0f);
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxSynthAttempts) throw DataError("synth_dataset: could not place lesions for " + id);
    std::vector<Ellipse> lesions(1 + rng.uniform_index(2));
    for (auto& e : lesions) {
      const double theta = rng.uniform() * std::numbers::pi;
      e = {w * (0.2 + 0.6 * rng.uniform()), h * (0.2 + 0.6 * rng.uniform()), w * (0.1 + 0.25 * rng.uniform()),
           h * (0.1 + 0.25 * rng.uniform()), std::cos(theta), std::sin(theta)};
    }
    auto m = mask.values();
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double px = static_cast<double>(x) + 0.5;
        const double py = static_cast<double>(y) + 0.5;
        const bool inside = std::any_of(lesions.begin(), lesions.end(), [&](const Ellipse& e) { return e.contains(px, py); });
        m[y * width + x] = inside ? 1.0f : -1.0f;
      }
    }
    const double frac = mask_fraction(mask);
    if (frac >= kMinMaskFraction && frac <= kMaxMaskFraction) break;
  }

  // Skin-like background, darker brown lesion with a low-frequency mottle.
  constexpr double skin[3] = {0.86, 0.66, 0.56};
  constexpr double lesion[3] = {0.42, 0.27, 0.2};
  const double fx = 2.0 * std::numbers::pi * (1.0 + 2.0 * rng.uniform()) / w;
  const double fy = 2.0 * std::numbers::pi * (1.0 + 2.0 * rng.uniform()) / h;
  const double phase = 2.0 * std::numbers::pi * rng.uniform();
  const double shade = 0.9 + 0.2 * rng.uniform();
  Tensor<float> image(Shape{3, height, width});
  auto img = image.values();
  const auto m = mask.values();
  const std::size_t plane = height * width;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t i = y * width + x;
      const bool inside = m[i] > 0.0f;
      const double mottle = inside ? 0.08 * std::sin(fx * x + phase) * std::cos(fy * y - phase) : 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = (inside ? lesion[c] : skin[c]) * shade;
        const double noise = (inside ? 0.06 : 0.04) * rng.normal();
        const double v = std::clamp(base + mottle + noise, 0.0, 1.0);
        img[c * plane + i] = static_cast<float>(2.0 * v - 1.0);
      }
    }
  }
  return SegSample{std::move(image), std::move(mask), std::move(id)};
}

}  // namespace

Tensor<float> load_image(const fs::path& path, std::size_t height, std::size_t width) {
  return normalize_image(read_png(path), height, width);
}

Tensor<float> load_mask(const fs::path& path, std::size_t height, std::size_t width) {
  return binarize_mask(read_png(path), height, width);
}

SplitSpec SplitSpec::read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read split file " + path.string());
  SplitSpec spec;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string split;
    std::string id;
    if (!(ss >> split)) continue;
    if (!(ss >> id)) throw DataError(path.string() + ":" + std::to_string(line_no) + ": missing id");
    if (split == "train") {
      spec.train.push_back(id);
    } else if (split == "val") {
      spec.val.push_back(id);
    } else if (split == "test") {
      spec.test.push_back(id);
    } else {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": unknown split '" + split + "'");
    }
  }
  return spec;
}

void SplitSpec::validate(const std::vector<std::string>& ids) const {
  std::set<std::string> seen;
  for (const auto* list : {&train, &val, &test}) {
    for (const auto& id : *list) {
      if (!seen.insert(id).second) throw DataError("split lists overlap on id " + id);
    }
  }
  const std::set<std::string> all(ids.begin(), ids.end());
  for (const auto& id : seen) {
    if (!all.count(id)) throw DataError("split names unknown sample " + id);
  }
  for (const auto& id : all) {
    if (!seen.count(id)) throw DataError("sample " + id + " is not assigned to any split");
  }
}

const std::vector<std::string>& SplitSpec::ids(std::string_view split) const {
  if (split == "train") return train;
  if (split == "val") return val;
  if (split == "test") return test;
  throw DataError("unknown split '" + std::string(split) + "'");
}

Dataset load_dataset(const fs::path& image_dir, const fs::path& mask_dir, std::size_t height, std::size_t width,
                     const std::optional<SplitSpec>& split) {
  if (height == 0 || width == 0) throw DataError("target size must be positive");
  const auto images = png_files(image_dir);
  std::map<std::string, fs::path> masks;
  for (const auto& m : png_files(mask_dir)) masks[mask_key(m)] = m;

  Dataset out;
  std::set<std::string> used;
  for (const auto& path : images) {
    const std::string id = path.stem().string();
    const auto it = masks.find(id);
    if (it == masks.end()) throw DataError("image " + path.string() + " has no mask in " + mask_dir.string());
    used.insert(id);
    out.push_back({normalize_image(read_png(path), height, width), binarize_mask(read_png(it->second), height, width), id});
  }
  for (const auto& [id, path] : masks) {
    if (!used.count(id)) throw DataError("mask " + path.string() + " has no image in " + image_dir.string());
  }
  if (split) {
    std::vector<std::string> ids;
    for (const auto& s : out) ids.push_back(s.id);
    split->validate(ids);
  }
  return out;
}

Dataset select_split(const Dataset& data, const std::optional<SplitSpec>& split, std::string_view name) {
  if (name == "all") return data;
  if (!split) throw DataError("split '" + std::string(name) + "' requested but no split file given");
  std::map<std::string, const SegSample*> by_id;
  for (const auto& s : data) by_id[s.id] = &s;
  Dataset out;
  for (const auto& id : split->ids(name)) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("split names unknown sample " + id);
    out.push_back(*it->second);
  }
  return out;
}

Dataset synth_dataset(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed) {
  if (height < 16 || width < 16) throw DataError("synth_dataset: size must be at least 16x16");
  Dataset out;
  out.reserve(count);
  const RandomStream root = RandomStream(seed).split(kSynthStream);
  for (std::size_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", i);
    out.push_back(synth_sample(height, width, root.split(i), id));
  }
  return out;
}

void save_sample(const SegSample& sample, const fs::path& image_dir, const fs::path& mask_dir) {
  fs::create_directories(image_dir);
  fs::create_directories(mask_dir);
  write_png(image_dir / (sample.id + ".png"), to_rgb_image(sample.image));
  write_png(mask_dir / (sample.id + ".png"), to_gray_image(sample.mask));
}

double mask_fraction(const Tensor<float>& mask) {
  const auto v = mask.values();
  const auto fg = std::count_if(v.begin(), v.end(), [](float x) { return x > 0.0f; });
  return static_cast<double>(fg) / static_cast<double>(v.size());
}

}  // namespace ncadiff
