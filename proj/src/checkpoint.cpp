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

#include "ncadiff/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "ncadiff/errors.hpp"

namespace ncadiff {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using Kind = CheckpointError::Kind;

constexpr std::string_view kStepKey = "optim.step";
constexpr std::string_view kFirstPrefix = "opt.m/";
constexpr std::string_view kSecondPrefix = "opt.v/";
constexpr std::uint64_t kMaxRank = 8;

void put_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); }

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  void read(void* dst, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what);
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    read(&v, sizeof v, what);
    return v;
  }

  std::string string(const char* what) {
    const auto n = u64(what);
    if (n > remaining()) throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

}  // namespace

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint32_t version = kCheckpointVersion;
  out.append(reinterpret_cast<const char*>(&version), sizeof version);
  put_u64(out, file.config_text.size());
  out += file.config_text;
  put_u64(out, file.tensors.size());
  for (const auto& t : file.tensors) {
    put_u64(out, t.name.size());
    out += t.name;
    put_u64(out, t.tensor.rank());
    for (auto d : t.tensor.shape()) put_u64(out, d);
    const auto v = t.tensor.values();
    out.append(reinterpret_cast<const char*>(v.data()), v.size_bytes());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(Kind::io, "cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError(Kind::io, "failed writing " + path.string());
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(Kind::io, "cannot open checkpoint " + path.string());
  Reader in(std::string(std::istreambuf_iterator<char>(f), {}));

  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw CheckpointError(Kind::bad_magic, path.string() + " is not an ncadiff checkpoint (bad magic)");
  }
  std::uint32_t version;
  in.read(&version, sizeof version, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::version_mismatch, "checkpoint version " + std::to_string(version) +
                                                      " is not supported (expected " +
                                                      std::to_string(kCheckpointVersion) + ")");
  }
  CheckpointFile file;
  file.config_text = in.string("config");
  const auto count = in.u64("tensor count");
  std::set<std::string> seen;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = in.string("tensor name");
    if (!seen.insert(name).second) throw CheckpointError(Kind::malformed, "duplicate tensor '" + name + "'");
    const auto rank = in.u64("tensor rank");
    if (rank == 0 || rank > kMaxRank) {
      throw CheckpointError(Kind::malformed, "tensor '" + name + "' has invalid rank " + std::to_string(rank));
    }
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = in.u64("tensor dims");
      if (d == 0 || numel > in.remaining() / d) {
        throw CheckpointError(d == 0 ? Kind::malformed : Kind::truncated,
                              "tensor '" + name + "' has dims exceeding the file");
      }
      numel *= d;
    }
    Tensor<float> t(shape);
    auto v = t.values();
    in.read(v.data(), v.size_bytes(), "tensor values");
    file.tensors.push_back({std::move(name), t});
  }
  if (in.remaining() != 0) {
    throw CheckpointError(Kind::malformed, std::to_string(in.remaining()) + " trailing bytes after last tensor");
  }
  return file;
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const ModelParams<float>& params,
                     const OptimState<float>* optim) {
  CheckpointFile file;
  file.config_text = serialize_config(config);
  file.tensors = params.named_parameters();
  if (optim) {
    file.config_text += std::string(kStepKey) + " = " + std::to_string(optim->step) + "\n";
    for (std::size_t i = 0; i < optim->names.size(); ++i) {
      file.tensors.push_back({std::string(kFirstPrefix) + optim->names[i], optim->first_moment[i]});
      file.tensors.push_back({std::string(kSecondPrefix) + optim->names[i], optim->second_moment[i]});
    }
  }
  write_checkpoint_file(path, file);
}

void assign_parameters(ModelParams<float>& target, const std::vector<NamedTensor<float>>& stored) {
  const auto expected = target.named_parameters();
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& s : stored) by_name[s.name] = &s.tensor;
  std::vector<std::string> missing, unexpected;
  for (const auto& e : expected) {
    if (!by_name.count(e.name)) missing.push_back(e.name);
  }
  for (const auto& [name, _] : by_name) {
    const bool known = std::any_of(expected.begin(), expected.end(), [&](const auto& e) { return e.name == name; });
    if (!known) unexpected.push_back(name);
  }
  if (!missing.empty() || !unexpected.empty()) {
    std::string msg = "checkpoint parameters do not match the model";
    if (!missing.empty()) msg += "; missing: " + join(missing);
    if (!unexpected.empty()) msg += "; unexpected: " + join(unexpected);
    throw CheckpointError(Kind::name_set_mismatch, msg);
  }
  for (const auto& e : expected) {
    const auto& src = *by_name.at(e.name);
    if (src.shape() != e.tensor.shape()) {
      throw CheckpointError(Kind::malformed, "tensor '" + e.name + "' has shape " + shape_string(src.shape()) +
                                                 ", model expects " + shape_string(e.tensor.shape()));
    }
    Tensor<float> dst = e.tensor;
    std::copy(src.values().begin(), src.values().end(), dst.values().begin());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  auto file = read_checkpoint_file(path);

  std::string config_text;
  std::optional<std::uint64_t> step;
  std::string_view rest = file.config_text;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    const auto line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (starts_with(line, kStepKey)) {
      const auto eq = line.find('=');
      try {
        step = std::stoull(std::string(line.substr(eq + 1)));
      } catch (const std::exception&) {
        throw CheckpointError(Kind::malformed, "invalid optimizer step in checkpoint config");
      }
    } else {
      config_text.append(line).push_back('\n');
    }
  }

  Checkpoint ck{.config = {}, .params = {}, .optim = std::nullopt};
  try {
    parse_config(config_text);
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::malformed, std::string("checkpoint config invalid: ") + e.what());
  }
  // A variant override drags the stored level count along with it.
  ConfigOverrides effective = overrides;
  const auto has_key = [&](std::string_view key) {
    return std::any_of(overrides.begin(), overrides.end(), [&](const auto& kv) { return kv.first == key; });
  };
  if (has_key("variant") && !has_key("levels")) {
    for (const auto& [key, value] : overrides) {
      if (key == "variant") effective.emplace_back("levels", std::to_string(variant_levels(parse_variant(value))));
    }
  }
  ck.config = parse_config(config_text, effective);
  ck.params = ModelParams<float>::create(ck.config.model, ck.config.seed);

  std::vector<NamedTensor<float>> model_tensors;
  std::map<std::string, Tensor<float>> moments;
  for (auto& t : file.tensors) {
    if (starts_with(t.name, kFirstPrefix) || starts_with(t.name, kSecondPrefix)) {
      moments.emplace(t.name, t.tensor);
    } else {
      model_tensors.push_back(t);
    }
  }
  assign_parameters(ck.params, model_tensors);

  if (step) {
    auto opt = OptimState<float>::create(ck.params.named_parameters(), ck.config.optim);
    opt.step = *step;
    for (std::size_t i = 0; i < opt.names.size(); ++i) {
      for (auto [prefix, dst] : {std::pair{kFirstPrefix, &opt.first_moment[i]}, std::pair{kSecondPrefix, &opt.second_moment[i]}}) {
        const auto key = std::string(prefix) + opt.names[i];
        const auto it = moments.find(key);
        if (it == moments.end()) throw CheckpointError(Kind::name_set_mismatch, "missing optimizer tensor '" + key + "'");
        if (it->second.shape() != dst->shape()) {
          throw CheckpointError(Kind::malformed, "optimizer tensor '" + key + "' has the wrong shape");
        }
        *dst = it->second;
        moments.erase(it);
      }
    }
    if (!moments.empty()) {
      throw CheckpointError(Kind::name_set_mismatch, "unexpected optimizer tensor '" + moments.begin()->first + "'");
    }
    ck.optim = std::move(opt);
  } else if (!moments.empty()) {
    throw CheckpointError(Kind::malformed, "optimizer tensors present without an optimizer step");
  }
  return ck;
}

}  // namespace ncadiff
