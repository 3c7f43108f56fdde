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

#include <doctest.h>

#include "ncadiff/errors.hpp"
#include "ncadiff/ops.hpp"
#include "ncadiff/tensor.hpp"

using namespace ncadiff;

TEST_CASE("construction, shape queries and fill") {
  Tensor<float> t({2, 3, 4}, 1.5f);
  CHECK(t.rank() == 3);
  CHECK(t.dim(1) == 3);
  CHECK(t.numel() == 24);
  for (float v : t.values()) CHECK(v == 1.5f);
  CHECK(shape_numel({2, 3, 4}) == 24);
  CHECK(shape_string({2, 3}) == "[2,3]");
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  CHECK(Tensor<double>::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor<float>({2}).item(), ShapeError);
  CHECK_FALSE(Tensor<float>().defined());
}

TEST_CASE("handles share storage; clone and alias") {
  Tensor<float> a({3}, 1.0f);
  Tensor<float> b = a;
  b.values()[0] = 5.0f;
  CHECK(a.values()[0] == 5.0f);

  Tensor<float> c = a.clone();
  c.values()[1] = 7.0f;
  CHECK(a.values()[1] == 1.0f);
  CHECK_FALSE(c.shares_data_with(a));

  a.set_requires_grad(true);
  Tensor<float> d = a.alias();
  CHECK(d.shares_data_with(a));
  CHECK(d.requires_grad());
  d.grad_buffer()[0] = 3.0f;
  CHECK_FALSE(a.has_grad());

  const auto e = a.cast<double>();
  CHECK(e.values()[0] == 5.0);
}

TEST_CASE("ops are not recorded without an active tape or without grad-requiring inputs") {
  Tensor<double> x({2}, 1.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  {
    Tensor<double> y = add(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  {
    Tape<double>::Scope scope(tape);
    Tensor<double> constant({2}, 2.0);
    mul(constant, constant);
    CHECK(tape.size() == 0);
    mul(x, constant);
    CHECK(tape.size() == 1);
  }
  CHECK(Tape<double>::active() == nullptr);
}

TEST_CASE("scopes nest and restore the previous tape") {
  Tape<float> outer, inner;
  Tape<float>::Scope a(outer);
  {
    Tape<float>::Scope b(inner);
    CHECK(Tape<float>::active() == &inner);
  }
  CHECK(Tape<float>::active() == &outer);
}

TEST_CASE("backward of a small graph matches hand derivatives") {
  // f(x, y) = sum(x * y + x) ; df/dx = y + 1, df/dy = x
  Tensor<double> x({3}, std::vector<double>{1, 2, 3});
  Tensor<double> y({3}, std::vector<double>{-1, 0.5, 4});
  x.set_requires_grad(true);
  y.set_requires_grad(true);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  auto f = sum(add(mul(x, y), x));
  CHECK(f.item() == doctest::Approx(1 * -1 + 2 * 0.5 + 3 * 4 + 6));
  tape.backward(f);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.5);
  CHECK(x.grad()[2] == 5.0);
  CHECK(y.grad()[2] == 3.0);
  CHECK(tape.last_replay_count() == tape.size());
}

TEST_CASE("leaf gradients accumulate across backward calls, intermediates reset") {
  Tensor<double> x({2}, 1.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  auto h = scale(x, 3.0);
  auto f = sum(h);
  tape.backward(f);
  tape.backward(f);
  CHECK(x.grad()[0] == 6.0);
  CHECK(h.grad()[0] == 1.0);
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("nodes unrelated to the loss are skipped but counted") {
  Tensor<double> x({2}, 1.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  auto unused = scale(x, 2.0);
  auto f = sum(x);
  tape.backward(f);
  CHECK(tape.last_replay_count() == 2);
  CHECK_FALSE(unused.has_grad());
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor<double> x({2}, 1.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  CHECK_THROWS_AS(tape.backward(scale(x, 2.0)), ShapeError);
}

TEST_CASE("clear drops recorded nodes") {
  Tensor<float> x({2}, 1.0f);
  x.set_requires_grad(true);
  Tape<float> tape;
  Tape<float>::Scope scope(tape);
  relu(x);
  CHECK(tape.size() == 1);
  tape.clear();
  CHECK(tape.size() == 0);
}
