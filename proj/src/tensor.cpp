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

#include "ncadiff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "ncadiff/errors.hpp"

namespace ncadiff {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  const auto n = shape_numel(shape);
  impl_->shape = std::move(shape);
  impl_->data = std::make_shared<std::vector<T>>(n, fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::make_shared<std::vector<T>>(std::move(values));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape()) + " is not scalar");
  return (*impl_->data)[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(shape(), *impl_->data);
}

template <typename T>
Tensor<T> Tensor<T>::alias() const {
  Tensor out;
  out.impl_ = std::make_shared<detail::TensorImpl<T>>();
  out.impl_->shape = impl_->shape;
  out.impl_->data = impl_->data;
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

namespace {

template <typename T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

std::atomic<bool> g_corrupt_backward{false};

}  // namespace

template <typename T>
Tape<T>::Scope::Scope(Tape& tape) : previous_(active_tape<T>()) {
  active_tape<T>() = &tape;
}

template <typename T>
Tape<T>::Scope::~Scope() {
  active_tape<T>() = previous_;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return active_tape<T>();
}

template <typename T>
void Tape<T>::record(const Tensor<T>& output, BackwardFn fn) {
  output.impl()->requires_grad = true;
  output.impl()->leaf = false;
  nodes_.push_back(Node{output.impl(), std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  for (auto& node : nodes_) {
    std::fill(node.output->grad.begin(), node.output->grad.end(), T(0));
  }
  if (!loss.requires_grad()) return;
  loss.impl()->grad_buffer()[0] += T(1);

  replayed_ = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    ++replayed_;
    // Nodes the loss does not depend on never received a gradient buffer.
    if (it->output->grad.empty()) continue;
    it->fn(it->output->grad);
  }
}

namespace debug {
void set_corrupt_backward(bool enabled) { g_corrupt_backward.store(enabled); }
bool corrupt_backward() { return g_corrupt_backward.load(); }
}  // namespace debug

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace ncadiff
