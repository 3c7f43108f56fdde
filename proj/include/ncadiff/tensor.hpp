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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ncadiff {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename T>
struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  bool leaf = true;

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(data->size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major array with an optional gradient accumulator.
///
/// Tensor is a shared handle: copies refer to the same buffers. Use clone() for a
/// deep copy. Float is the working precision; double is used for verification.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  bool defined() const noexcept { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data->size(); }

  std::span<T> values() { return *impl_->data; }
  std::span<const T> values() const { return *impl_->data; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const { return impl_->leaf; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Accumulated gradient; empty span if nothing has been accumulated.
  std::span<const T> grad() const { return impl_->grad; }
  /// Gradient buffer, allocated as zeros on first use. Const so that backward
  /// closures holding const handles can accumulate into it.
  std::span<T> grad_buffer() const { return impl_->grad_buffer(); }
  void zero_grad();

  /// Deep copy as a fresh leaf without gradient.
  Tensor clone() const;
  /// Leaf view sharing the data buffer but owning its own gradient.
  Tensor alias() const;
  bool shares_data_with(const Tensor& other) const { return impl_->data == other.impl_->data; }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(numel());
    const auto src = values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
    return Tensor<U>(shape(), std::move(out));
  }

  const std::shared_ptr<detail::TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

/// Straight-line reverse-mode tape.
///
/// Operations executed while a Tape::Scope is active on the calling thread append
/// one node per differentiable result. Nodes are recorded in execution order, which
/// is a topological order, so backward() replays them in reverse exactly once each.
/// Ops executed with no active tape are not recorded (inference mode). Tapes are
/// thread-confined: give each worker its own.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const T> grad_out)>;

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(const Tensor<T>& output, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and replays every node in reverse. Intermediate
  /// gradients are reset first; leaf gradients accumulate across calls.
  void backward(const Tensor<T>& loss);

  /// Drops all nodes and the intermediate buffers they keep alive.
  void clear() { nodes_.clear(); }

  std::size_t size() const { return nodes_.size(); }
  std::size_t last_replay_count() const { return replayed_; }

 private:
  struct Node {
    std::shared_ptr<detail::TensorImpl<T>> output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  std::size_t replayed_ = 0;
};

/// Test hook: while enabled, dense-layer weight gradients are scaled by 1.01 so
/// that gradient checks must fail.
namespace debug {
void set_corrupt_backward(bool enabled);
bool corrupt_backward();
}  // namespace debug

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ncadiff
