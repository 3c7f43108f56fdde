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
#include <functional>
#include <string>
#include <vector>

#include "ncadiff/models.hpp"
#include "ncadiff/tensor.hpp"

namespace ncadiff {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-3;
  /// Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  /// A failing element is re-measured with the step shrunk tenfold, up to this
  /// many times; the best agreement is kept (ReLU and max-pool kinks).
  int retries = 2;
};

struct TensorGradError {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  std::vector<TensorGradError> tensors;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

/// Compares the tape gradient of a scalar loss against central differences for
/// every element of every listed tensor. loss must be deterministic.
GradcheckReport check_gradients(const std::function<Tensor<double>()>& loss,
                                const std::vector<NamedTensor<double>>& inputs, const GradcheckOptions& options = {});

/// Small configuration of a variant used by the gradcheck command: c=8,
/// hidden 16, n_steps 2, factor 2.
ModelConfig gradcheck_config(Variant variant);

/// loss_total of a randomly initialised model (all weights nonzero) on a random
/// 8x8 sample, checked over every parameter in 64-bit.
GradcheckReport gradcheck_model(const ModelConfig& config, std::uint64_t seed, const GradcheckOptions& options = {},
                                std::size_t size = 8);

}  // namespace ncadiff
