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

#include <stdexcept>
#include <string>

namespace ncadiff {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or malformed tensor arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument to a numeric routine (out-of-range step, bad schedule, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Unknown key, unparseable value or violated constraint in a run config.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, undecodable or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { io, bad_magic, version_mismatch, truncated, malformed, name_set_mismatch };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace ncadiff
