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

#include "ncadiff/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <system_error>

#include "ncadiff/errors.hpp"

namespace ncadiff {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(std::string_view key, std::string_view value) {
  N out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value for " + std::string(key) + ": '" + std::string(value) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("invalid value for " + std::string(key) + ": '" + std::string(value) + "' (expected true/false)");
}

template <typename N>
std::string format_number(N v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename N>
Field number_field(std::string key, N RunConfig::*member) {
  return {key, [key, member](RunConfig& c, std::string_view v) { c.*member = parse_number<N>(key, v); },
          [member](const RunConfig& c) { return format_number(c.*member); }};
}

template <typename N>
Field model_field(std::string key, N ModelConfig::*member) {
  return {key, [key, member](RunConfig& c, std::string_view v) { c.model.*member = parse_number<N>(key, v); },
          [member](const RunConfig& c) { return format_number(c.model.*member); }};
}

Field optim_field(std::string key, double AdamWOptions::*member) {
  return {key, [key, member](RunConfig& c, std::string_view v) { c.optim.*member = parse_number<double>(key, v); },
          [member](const RunConfig& c) { return format_number(c.optim.*member); }};
}

Field bool_field(std::string key, bool RunConfig::*member) {
  return {key, [key, member](RunConfig& c, std::string_view v) { c.*member = parse_bool(key, v); },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field string_field(std::string key, std::string RunConfig::*member) {
  return {key, [member](RunConfig& c, std::string_view v) { c.*member = std::string(v); },
          [member](const RunConfig& c) { return c.*member; }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"variant", [](RunConfig& c, std::string_view v) { c.model.variant = parse_variant(v); },
                 [](const RunConfig& c) { return std::string(variant_name(c.model.variant)); }});
    f.push_back(model_field("channels", &ModelConfig::channels));
    f.push_back(model_field("hidden", &ModelConfig::hidden));
    f.push_back(model_field("perception_kernels", &ModelConfig::perception_kernels));
    f.push_back(model_field("n_steps", &ModelConfig::n_steps));
    f.push_back(model_field("fire_rate", &ModelConfig::fire_rate));
    f.push_back(model_field("levels", &ModelConfig::levels));
    f.push_back(model_field("downsample_factor", &ModelConfig::downsample_factor));
    f.push_back(model_field("cbam_reduction", &ModelConfig::cbam_reduction));
    f.push_back(number_field("timesteps", &RunConfig::timesteps));
    f.push_back(number_field("beta_start", &RunConfig::beta_start));
    f.push_back(number_field("beta_end", &RunConfig::beta_end));
    f.push_back(number_field("batch_size", &RunConfig::batch_size));
    f.push_back(number_field("total_steps", &RunConfig::total_steps));
    f.push_back(optim_field("lr", &AdamWOptions::lr));
    f.push_back(optim_field("weight_decay", &AdamWOptions::weight_decay));
    f.push_back(optim_field("adam_beta1", &AdamWOptions::beta1));
    f.push_back(optim_field("adam_beta2", &AdamWOptions::beta2));
    f.push_back(optim_field("adam_eps", &AdamWOptions::eps));
    f.push_back(bool_field("rgb_loss", &RunConfig::rgb_loss));
    f.push_back(number_field("eval_every", &RunConfig::eval_every));
    f.push_back(number_field("checkpoint_every", &RunConfig::checkpoint_every));
    f.push_back(bool_field("record_timing", &RunConfig::record_timing));
    f.push_back(number_field("seed", &RunConfig::seed));
    f.push_back(number_field("runs", &RunConfig::runs));
    f.push_back(number_field("threads", &RunConfig::threads));
    f.push_back(string_field("data", &RunConfig::data));
    f.push_back(string_field("image_dir", &RunConfig::image_dir));
    f.push_back(string_field("mask_dir", &RunConfig::mask_dir));
    f.push_back(string_field("split_file", &RunConfig::split_file));
    f.push_back(number_field("synthetic_count", &RunConfig::synthetic_count));
    f.push_back(number_field("height", &RunConfig::height));
    f.push_back(number_field("width", &RunConfig::width));
    f.push_back(string_field("output_dir", &RunConfig::output_dir));
    f.push_back(string_field("predictor", &RunConfig::predictor));
    return f;
  }();
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (timesteps < 1) throw ConfigError("timesteps must be at least 1");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw ConfigError("beta schedule must satisfy 0 < beta_start <= beta_end < 1");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (total_steps < 0) throw ConfigError("total_steps must be non-negative");
  if (!(optim.lr > 0.0)) throw ConfigError("lr must be positive");
  if (optim.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0 && optim.beta2 >= 0.0 && optim.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0,1)");
  }
  if (!(optim.eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (eval_every < 0 || checkpoint_every < 0) throw ConfigError("eval_every and checkpoint_every must be >= 0");
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (data != "synthetic" && data != "dir") throw ConfigError("data must be 'synthetic' or 'dir', got '" + data + "'");
  if (data == "dir" && (image_dir.empty() || mask_dir.empty())) {
    throw ConfigError("data = dir requires image_dir and mask_dir");
  }
  if (data == "synthetic" && synthetic_count < 1) throw ConfigError("synthetic_count must be at least 1");
  if (height < 1 || width < 1) throw ConfigError("height and width must be positive");
  if (predictor != "nca" && predictor != "oracle") {
    throw ConfigError("predictor must be 'nca' or 'oracle', got '" + predictor + "'");
  }
  try {
    model.check_image_size(height, width);
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_config(std::string_view text, const ConfigOverrides& overrides) {
  std::map<std::string, std::string> entries;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (!find_field(key)) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!entries.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  for (const auto& [key, value] : overrides) {
    if (!find_field(key)) throw ConfigError("unknown key '" + key + "'");
    entries[key] = std::string(trim(value));
  }

  RunConfig config;
  for (const auto& f : fields()) {
    if (const auto it = entries.find(f.key); it != entries.end() && f.key != "levels") f.set(config, it->second);
  }
  config.model.levels = variant_levels(config.model.variant);
  if (const auto it = entries.find("levels"); it != entries.end()) find_field("levels")->set(config, it->second);
  config.validate();
  return config;
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace ncadiff
