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

namespace ncadiff {

/// Counter-based splittable random stream.
///
/// Output i of a stream is a SplitMix64 finalization of (key + i * golden gamma),
/// so a stream is fully described by its (key, counter) pair. split(j) derives an
/// independent child key from the parent key and j without advancing the parent;
/// callers use it to hand reproducible sub-streams to batch samples, ensemble runs
/// and NCA rollouts regardless of scheduling order.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0);

  RandomStream split(std::uint64_t index) const;

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();

  /// Standard normal via Box-Muller (one variate per two uniforms, no caching).
  double normal();

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  friend bool operator==(const RandomStream&, const RandomStream&) = default;

 private:
  RandomStream(std::uint64_t key, std::uint64_t counter, int) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ncadiff
