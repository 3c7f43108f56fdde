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

#include "ncadiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "ncadiff/errors.hpp"

namespace ncadiff {
namespace {

template <typename T>
Tape<T>* tape_for(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return nullptr;
  for (const auto* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
T weight_grad_factor() {
  return debug::corrupt_backward() ? T(1.01) : T(1);
}

// ---------------------------------------------------------------- broadcast

enum class Broadcast { same, scalar, channel, plane };

Broadcast resolve_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::same;
  if (shape_numel(b) == 1) return Broadcast::scalar;
  if (a.size() >= 2 && b.size() == 1 && b[0] == a[0]) return Broadcast::channel;
  if (a.size() >= 2 && b.size() == a.size() && b[0] == 1 &&
      std::equal(a.begin() + 1, a.end(), b.begin() + 1)) {
    return Broadcast::plane;
  }
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

struct BroadcastIndex {
  Broadcast kind;
  std::size_t inner;

  std::size_t operator()(std::size_t i) const {
    switch (kind) {
      case Broadcast::same: return i;
      case Broadcast::scalar: return 0;
      case Broadcast::channel: return i / inner;
      case Broadcast::plane: return i % inner;
    }
    return i;
  }
};

template <typename T>
BroadcastIndex make_index(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  const auto kind = resolve_broadcast(a.shape(), b.shape(), op);
  const std::size_t inner = a.rank() > 0 && a.dim(0) > 0 ? a.numel() / a.dim(0) : 1;
  return {kind, inner};
}

enum class BinaryOp { add, sub, mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryOp op, const char* name) {
  const auto idx = make_index(a, b, name);
  Tensor<T> out(a.shape());
  auto o = out.values();
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t n = a.numel();
  switch (op) {
    case BinaryOp::add:
      for (std::size_t i = 0; i < n; ++i) o[i] = av[i] + bv[idx(i)];
      break;
    case BinaryOp::sub:
      for (std::size_t i = 0; i < n; ++i) o[i] = av[i] - bv[idx(i)];
      break;
    case BinaryOp::mul:
      for (std::size_t i = 0; i < n; ++i) o[i] = av[i] * bv[idx(i)];
      break;
  }
  if (auto* tape = tape_for<T>({&a, &b})) {
    tape->record(out, [a, b, idx, op](std::span<const T> g) mutable {
      const std::size_t n = g.size();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        if (op == BinaryOp::mul) {
          const auto bv = b.values();
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[idx(i)];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        if (op == BinaryOp::mul) {
          const auto av = a.values();
          for (std::size_t i = 0; i < n; ++i) gb[idx(i)] += g[i] * av[i];
        } else if (op == BinaryOp::add) {
          for (std::size_t i = 0; i < n; ++i) gb[idx(i)] += g[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[idx(i)] -= g[i];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- conv helpers

std::size_t pad_index(std::ptrdiff_t i, std::size_t n, Padding padding) {
  const auto sn = static_cast<std::ptrdiff_t>(n);
  if (padding == Padding::replicate) return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, sn - 1));
  return static_cast<std::size_t>(((i % sn) + sn) % sn);
}

// table[y * k + d] = source row feeding output row y through kernel row d.
std::vector<std::size_t> neighbour_table(std::size_t n, std::size_t k, Padding padding) {
  std::vector<std::size_t> table(n * k);
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t d = 0; d < k; ++d) {
      table[y * k + d] = pad_index(static_cast<std::ptrdiff_t>(y) + static_cast<std::ptrdiff_t>(d) - r, n, padding);
    }
  }
  return table;
}

struct LerpTap {
  std::size_t i0;
  std::size_t i1;
  double weight;
};

std::vector<LerpTap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<LerpTap> taps(in * factor);
  for (std::size_t d = 0; d < taps.size(); ++d) {
    double src = (static_cast<double>(d) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::max(src, 0.0);
    auto i0 = static_cast<std::size_t>(std::floor(src));
    i0 = std::min(i0, in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[d] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::add, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::sub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::mul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  auto o = out.values();
  const auto av = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * factor;
  if (auto* tape = tape_for<T>({&a})) {
    tape->record(out, [a, factor](std::span<const T> g) mutable {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  auto o = out.values();
  const auto av = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] > T(0) ? av[i] : T(0);
  if (auto* tape = tape_for<T>({&a})) {
    tape->record(out, [a](std::span<const T> g) mutable {
      auto ga = a.grad_buffer();
      const auto av = a.values();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (av[i] > T(0)) ga[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  auto o = out.values();
  const auto av = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = T(1) / (T(1) + std::exp(-av[i]));
  if (auto* tape = tape_for<T>({&a})) {
    tape->record(out, [a, s = out.impl()->data](std::span<const T> g) mutable {
      auto ga = a.grad_buffer();
      const auto& sv = *s;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sv[i] * (T(1) - sv[i]);
    });
  }
  return out;
}

// ---------------------------------------------------------------- dense layers

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight, const OptionalTensor<T>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0)) {
    throw ShapeError("affine: cannot multiply " + shape_string(x.shape()) + " by " + shape_string(weight.shape()));
  }
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto k = static_cast<Eigen::Index>(x.dim(1));
  const auto m = static_cast<Eigen::Index>(weight.dim(1));
  if (bias && (bias->rank() != 1 || bias->dim(0) != weight.dim(1))) {
    throw ShapeError("affine: bias " + shape_string(bias->shape()) + " does not match output width " +
                     std::to_string(m));
  }
  Tensor<T> out(Shape{x.dim(0), weight.dim(1)});
  ConstMatrixMap<T> X(x.values().data(), n, k);
  ConstMatrixMap<T> W(weight.values().data(), k, m);
  MatrixMap<T> Y(out.values().data(), n, m);
  Y.noalias() = X * W;
  if (bias) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias->values().data(), m);
    Y.rowwise() += b;
  }
  Tensor<T> b_handle = bias ? *bias : Tensor<T>();
  if (auto* tape = tape_for<T>({&x, &weight, bias ? &*bias : nullptr})) {
    tape->record(out, [x, weight, b_handle, n, k, m](std::span<const T> g) mutable {
      ConstMatrixMap<T> G(g.data(), n, m);
      if (x.requires_grad()) {
        MatrixMap<T> GX(x.grad_buffer().data(), n, k);
        ConstMatrixMap<T> W(weight.values().data(), k, m);
        GX.noalias() += G * W.transpose();
      }
      if (weight.requires_grad()) {
        MatrixMap<T> GW(weight.grad_buffer().data(), k, m);
        ConstMatrixMap<T> X(x.values().data(), n, k);
        GW.noalias() += weight_grad_factor<T>() * (X.transpose() * G);
      }
      if (b_handle.defined() && b_handle.requires_grad()) {
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> GB(b_handle.grad_buffer().data(), m);
        GB += G.colwise().sum();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> pointwise_affine(const Tensor<T>& x, const Tensor<T>& weight, const OptionalTensor<T>& bias) {
  if (x.rank() != 3 || weight.rank() != 2 || x.dim(0) != weight.dim(0)) {
    throw ShapeError("pointwise_affine: input " + shape_string(x.shape()) + " does not match weight " +
                     shape_string(weight.shape()));
  }
  const auto k = static_cast<Eigen::Index>(x.dim(0));
  const auto p = static_cast<Eigen::Index>(x.dim(1) * x.dim(2));
  const auto m = static_cast<Eigen::Index>(weight.dim(1));
  if (bias && (bias->rank() != 1 || bias->dim(0) != weight.dim(1))) {
    throw ShapeError("pointwise_affine: bias " + shape_string(bias->shape()) + " does not match output width " +
                     std::to_string(m));
  }
  Tensor<T> out(Shape{weight.dim(1), x.dim(1), x.dim(2)});
  ConstMatrixMap<T> X(x.values().data(), k, p);
  ConstMatrixMap<T> W(weight.values().data(), k, m);
  MatrixMap<T> Y(out.values().data(), m, p);
  Y.noalias() = W.transpose() * X;
  if (bias) {
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias->values().data(), m);
    Y.colwise() += b;
  }
  Tensor<T> b_handle = bias ? *bias : Tensor<T>();
  if (auto* tape = tape_for<T>({&x, &weight, bias ? &*bias : nullptr})) {
    tape->record(out, [x, weight, b_handle, k, p, m](std::span<const T> g) mutable {
      ConstMatrixMap<T> G(g.data(), m, p);
      if (x.requires_grad()) {
        MatrixMap<T> GX(x.grad_buffer().data(), k, p);
        ConstMatrixMap<T> W(weight.values().data(), k, m);
        GX.noalias() += W * G;
      }
      if (weight.requires_grad()) {
        MatrixMap<T> GW(weight.grad_buffer().data(), k, m);
        ConstMatrixMap<T> X(x.values().data(), k, p);
        GW.noalias() += weight_grad_factor<T>() * (X * G.transpose());
      }
      if (b_handle.defined() && b_handle.requires_grad()) {
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> GB(b_handle.grad_buffer().data(), m);
        GB += G.rowwise().sum();
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- convolution

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernels, ConvMode mode, Padding padding,
                 const OptionalTensor<T>& bias) {
  if (x.rank() != 3) throw ShapeError("conv2d: input must be [c,H,W], got " + shape_string(x.shape()));
  const std::size_t c_in = x.dim(0);
  const std::size_t height = x.dim(1);
  const std::size_t width = x.dim(2);
  const std::size_t expected_rank = mode == ConvMode::depthwise ? 3 : 4;
  if (kernels.rank() != expected_rank) {
    throw ShapeError("conv2d: kernel shape " + shape_string(kernels.shape()) + " has wrong rank");
  }
  const std::size_t ksize = kernels.dim(expected_rank - 1);
  if (kernels.dim(expected_rank - 2) != ksize || ksize % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " + shape_string(kernels.shape()));
  }
  const std::size_t c_out = kernels.dim(0);
  const std::size_t kernel_in = mode == ConvMode::depthwise ? 1 : kernels.dim(1);
  if ((mode == ConvMode::depthwise && c_out != c_in) || (mode == ConvMode::dense && kernel_in != c_in)) {
    throw ShapeError("conv2d: channel mismatch between input " + shape_string(x.shape()) + " and kernels " +
                     shape_string(kernels.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != c_out)) {
    throw ShapeError("conv2d: bias " + shape_string(bias->shape()) + " does not match " + std::to_string(c_out) +
                     " output channels");
  }

  const auto rows = neighbour_table(height, ksize, padding);
  const auto cols = neighbour_table(width, ksize, padding);
  const std::size_t plane = height * width;
  const std::size_t kk = ksize * ksize;

  // Input channel range feeding output channel o.
  auto in_begin = [mode](std::size_t o) { return mode == ConvMode::depthwise ? o : std::size_t{0}; };
  auto in_end = [mode, c_in](std::size_t o) { return mode == ConvMode::depthwise ? o + 1 : c_in; };
  auto kernel_at = [mode, c_in, kk](std::size_t o, std::size_t ci) {
    return mode == ConvMode::depthwise ? o * kk : (o * c_in + ci) * kk;
  };

  Tensor<T> out(Shape{c_out, height, width});
  {
    auto o = out.values();
    const auto xv = x.values();
    const auto kv = kernels.values();
    for (std::size_t oc = 0; oc < c_out; ++oc) {
      const T b0 = bias ? bias->values()[oc] : T(0);
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t xx = 0; xx < width; ++xx) {
          T acc = b0;
          for (std::size_t ci = in_begin(oc); ci < in_end(oc); ++ci) {
            const T* kp = kv.data() + kernel_at(oc, ci);
            const T* xp = xv.data() + ci * plane;
            for (std::size_t dy = 0; dy < ksize; ++dy) {
              const std::size_t row = rows[y * ksize + dy] * width;
              for (std::size_t dx = 0; dx < ksize; ++dx) acc += kp[dy * ksize + dx] * xp[row + cols[xx * ksize + dx]];
            }
          }
          o[oc * plane + y * width + xx] = acc;
        }
      }
    }
  }

  Tensor<T> b_handle = bias ? *bias : Tensor<T>();
  if (auto* tape = tape_for<T>({&x, &kernels, bias ? &*bias : nullptr})) {
    tape->record(out, [=, x = x, kernels = kernels, b_handle = b_handle](std::span<const T> g) mutable {
      const bool want_x = x.requires_grad();
      const bool want_k = kernels.requires_grad();
      T* gx = want_x ? x.grad_buffer().data() : nullptr;
      T* gk = want_k ? kernels.grad_buffer().data() : nullptr;
      const T kfactor = weight_grad_factor<T>();
      const auto xv = x.values();
      const auto kv = kernels.values();
      for (std::size_t oc = 0; oc < c_out; ++oc) {
        for (std::size_t y = 0; y < height; ++y) {
          for (std::size_t xx = 0; xx < width; ++xx) {
            const T go = g[oc * plane + y * width + xx];
            if (go == T(0)) continue;
            for (std::size_t ci = in_begin(oc); ci < in_end(oc); ++ci) {
              const std::size_t kbase = kernel_at(oc, ci);
              for (std::size_t dy = 0; dy < ksize; ++dy) {
                const std::size_t row = rows[y * ksize + dy] * width;
                for (std::size_t dx = 0; dx < ksize; ++dx) {
                  const std::size_t src = ci * plane + row + cols[xx * ksize + dx];
                  if (gx) gx[src] += go * kv[kbase + dy * ksize + dx];
                  if (gk) gk[kbase + dy * ksize + dx] += kfactor * go * xv[src];
                }
              }
            }
          }
        }
      }
      if (b_handle.defined() && b_handle.requires_grad()) {
        auto gb = b_handle.grad_buffer();
        for (std::size_t oc = 0; oc < c_out; ++oc) {
          T acc = T(0);
          for (std::size_t i = 0; i < plane; ++i) acc += g[oc * plane + i];
          gb[oc] += acc;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- pooling

template <typename T>
Tensor<T> pool(const Tensor<T>& x, PoolKind kind, std::size_t k) {
  if (x.rank() != 3) throw ShapeError("pool: input must be [c,H,W], got " + shape_string(x.shape()));
  const std::size_t channels = x.dim(0);
  const std::size_t height = x.dim(1);
  const std::size_t width = x.dim(2);
  const std::size_t plane = height * width;
  if (channels == 0 || plane == 0) throw ShapeError("pool: empty input " + shape_string(x.shape()));
  const auto xv = x.values();

  switch (kind) {
    case PoolKind::global_avg:
    case PoolKind::channel_avg: {
      const bool global = kind == PoolKind::global_avg;
      Tensor<T> out(global ? Shape{channels} : Shape{1, height, width});
      auto o = out.values();
      if (global) {
        for (std::size_t c = 0; c < channels; ++c) {
          T acc = T(0);
          for (std::size_t i = 0; i < plane; ++i) acc += xv[c * plane + i];
          o[c] = acc / static_cast<T>(plane);
        }
      } else {
        for (std::size_t i = 0; i < plane; ++i) {
          T acc = T(0);
          for (std::size_t c = 0; c < channels; ++c) acc += xv[c * plane + i];
          o[i] = acc / static_cast<T>(channels);
        }
      }
      if (auto* tape = tape_for<T>({&x})) {
        tape->record(out, [x, global, channels, plane](std::span<const T> g) mutable {
          auto gx = x.grad_buffer();
          if (global) {
            for (std::size_t c = 0; c < channels; ++c) {
              const T share = g[c] / static_cast<T>(plane);
              for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] += share;
            }
          } else {
            for (std::size_t i = 0; i < plane; ++i) {
              const T share = g[i] / static_cast<T>(channels);
              for (std::size_t c = 0; c < channels; ++c) gx[c * plane + i] += share;
            }
          }
        });
      }
      return out;
    }
    case PoolKind::global_max:
    case PoolKind::channel_max: {
      const bool global = kind == PoolKind::global_max;
      Tensor<T> out(global ? Shape{channels} : Shape{1, height, width});
      auto o = out.values();
      std::vector<std::size_t> argmax(o.size());
      if (global) {
        for (std::size_t c = 0; c < channels; ++c) {
          std::size_t best = c * plane;
          for (std::size_t i = 1; i < plane; ++i) {
            if (xv[c * plane + i] > xv[best]) best = c * plane + i;
          }
          argmax[c] = best;
          o[c] = xv[best];
        }
      } else {
        for (std::size_t i = 0; i < plane; ++i) {
          std::size_t best = i;
          for (std::size_t c = 1; c < channels; ++c) {
            if (xv[c * plane + i] > xv[best]) best = c * plane + i;
          }
          argmax[i] = best;
          o[i] = xv[best];
        }
      }
      if (auto* tape = tape_for<T>({&x})) {
        tape->record(out, [x, argmax = std::move(argmax)](std::span<const T> g) mutable {
          auto gx = x.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
        });
      }
      return out;
    }
    case PoolKind::spatial_avg: {
      if (k == 0 || height % k != 0 || width % k != 0) {
        throw ShapeError("pool: spatial " + std::to_string(k) + "x" + std::to_string(k) +
                         " average does not divide " + shape_string(x.shape()));
      }
      const std::size_t oh = height / k;
      const std::size_t ow = width / k;
      const T area = static_cast<T>(k * k);
      Tensor<T> out(Shape{channels, oh, ow});
      auto o = out.values();
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t xx = 0; xx < ow; ++xx) {
            T acc = T(0);
            for (std::size_t dy = 0; dy < k; ++dy) {
              for (std::size_t dx = 0; dx < k; ++dx) acc += xv[c * plane + (y * k + dy) * width + xx * k + dx];
            }
            o[(c * oh + y) * ow + xx] = acc / area;
          }
        }
      }
      if (auto* tape = tape_for<T>({&x})) {
        tape->record(out, [=, x = x](std::span<const T> g) mutable {
          auto gx = x.grad_buffer();
          for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t y = 0; y < height; ++y) {
              for (std::size_t xx = 0; xx < width; ++xx) {
                gx[c * plane + y * width + xx] += g[(c * oh + y / k) * ow + xx / k] / area;
              }
            }
          }
        });
      }
      return out;
    }
  }
  throw ShapeError("pool: unknown kind");
}

// ---------------------------------------------------------------- resampling

template <typename T>
Tensor<T> resample(const Tensor<T>& x, std::size_t factor, ResampleKind kind) {
  if (factor == 0) throw ShapeError("resample: factor must be positive");
  if (x.rank() != 3) throw ShapeError("resample: input must be [c,h,w], got " + shape_string(x.shape()));
  const std::size_t channels = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  const std::size_t oh = h * factor;
  const std::size_t ow = w * factor;
  Tensor<T> out(Shape{channels, oh, ow});
  auto o = out.values();
  const auto xv = x.values();

  if (kind == ResampleKind::nearest_up) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xx = 0; xx < ow; ++xx) o[(c * oh + y) * ow + xx] = xv[(c * h + y / factor) * w + xx / factor];
      }
    }
    if (auto* tape = tape_for<T>({&x})) {
      tape->record(out, [=, x = x](std::span<const T> g) mutable {
        auto gx = x.grad_buffer();
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) gx[(c * h + y / factor) * w + xx / factor] += g[(c * oh + y) * ow + xx];
          }
        }
      });
    }
    return out;
  }

  const auto ty = bilinear_taps(h, factor);
  const auto tx = bilinear_taps(w, factor);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = xv.data() + c * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      const T ly = static_cast<T>(ty[y].weight);
      const T* r0 = src + ty[y].i0 * w;
      const T* r1 = src + ty[y].i1 * w;
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const T lx = static_cast<T>(tx[xx].weight);
        const T top = r0[tx[xx].i0] + lx * (r0[tx[xx].i1] - r0[tx[xx].i0]);
        const T bottom = r1[tx[xx].i0] + lx * (r1[tx[xx].i1] - r1[tx[xx].i0]);
        o[(c * oh + y) * ow + xx] = top + ly * (bottom - top);
      }
    }
  }
  if (auto* tape = tape_for<T>({&x})) {
    tape->record(out, [=, x = x](std::span<const T> g) mutable {
      auto gx = x.grad_buffer();
      for (std::size_t c = 0; c < channels; ++c) {
        T* dst = gx.data() + c * h * w;
        for (std::size_t y = 0; y < oh; ++y) {
          const T ly = static_cast<T>(ty[y].weight);
          T* r0 = dst + ty[y].i0 * w;
          T* r1 = dst + ty[y].i1 * w;
          for (std::size_t xx = 0; xx < ow; ++xx) {
            const T lx = static_cast<T>(tx[xx].weight);
            const T go = g[(c * oh + y) * ow + xx];
            const T top = go * (T(1) - ly);
            const T bottom = go * ly;
            r0[tx[xx].i0] += top * (T(1) - lx);
            r0[tx[xx].i1] += top * lx;
            r1[tx[xx].i0] += bottom * (T(1) - lx);
            r1[tx[xx].i1] += bottom * lx;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- structure

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw ShapeError("concat: scalar inputs");
  shape[0] = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw ShapeError("concat: shape mismatch " + shape_string(parts.front().shape()) + " vs " +
                       shape_string(p.shape()));
    }
    shape[0] += p.dim(0);
  }
  Tensor<T> out(shape);
  auto o = out.values();
  std::size_t offset = 0;
  bool tracked = false;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), o.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.numel();
    tracked = tracked || p.requires_grad();
  }
  Tape<T>* tape = Tape<T>::active();
  if (tape && tracked) {
    tape->record(out, [parts](std::span<const T> g) mutable {
      std::size_t offset = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto gp = p.grad_buffer();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += p.numel();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  if (x.rank() == 0 || begin + count > x.dim(0)) {
    throw ShapeError("slice: rows [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") out of range for " + shape_string(x.shape()));
  }
  Shape shape = x.shape();
  shape[0] = count;
  const std::size_t inner = shape_numel(shape) / std::max<std::size_t>(count, 1);
  const std::size_t offset = begin * inner;
  Tensor<T> out(shape);
  const auto xv = x.values();
  std::copy(xv.begin() + static_cast<std::ptrdiff_t>(offset),
            xv.begin() + static_cast<std::ptrdiff_t>(offset + out.numel()), out.values().begin());
  if (auto* tape = tape_for<T>({&x})) {
    tape->record(out, [x, offset](std::span<const T> g) mutable {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()));
  if (auto* tape = tape_for<T>({&x})) {
    tape->record(out, [x](std::span<const T> g) mutable {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------- reductions
// Loss reductions accumulate in double, in index order.

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (const T v : x.values()) acc += static_cast<double>(v);
  auto out = Tensor<T>::scalar(static_cast<T>(acc));
  if (auto* tape = tape_for<T>({&x})) {
    tape->record(out, [x](std::span<const T> g) mutable {
      auto gx = x.grad_buffer();
      for (auto& v : gx) v += g[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (const T v : x.values()) acc += static_cast<double>(v);
  const double n = static_cast<double>(x.numel());
  auto out = Tensor<T>::scalar(static_cast<T>(acc / n));
  if (auto* tape = tape_for<T>({&x})) {
    tape->record(out, [x, n](std::span<const T> g) mutable {
      auto gx = x.grad_buffer();
      const T share = static_cast<T>(static_cast<double>(g[0]) / n);
      for (auto& v : gx) v += share;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  if (a.numel() == 0) throw ShapeError("mse: empty tensors");
  const auto av = a.values();
  const auto bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    acc += d * d;
  }
  const double n = static_cast<double>(a.numel());
  auto out = Tensor<T>::scalar(static_cast<T>(acc / n));
  if (auto* tape = tape_for<T>({&a, &b})) {
    tape->record(out, [a, b, n](std::span<const T> g) mutable {
      const auto av = a.values();
      const auto bv = b.values();
      const T coeff = static_cast<T>(2.0 * static_cast<double>(g[0]) / n);
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += coeff * (av[i] - bv[i]);
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= coeff * (av[i] - bv[i]);
      }
    });
  }
  return out;
}

#define NCADIFF_INSTANTIATE_OPS(T)                                                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                                      \
  template Tensor<T> relu(const Tensor<T>&);                                                          \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                       \
  template Tensor<T> affine(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&);     \
  template Tensor<T> pointwise_affine(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&); \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, ConvMode, Padding,                    \
                            const std::optional<Tensor<T>>&);                                         \
  template Tensor<T> pool(const Tensor<T>&, PoolKind, std::size_t);                                   \
  template Tensor<T> resample(const Tensor<T>&, std::size_t, ResampleKind);                           \
  template Tensor<T> concat(const std::vector<Tensor<T>>&);                                           \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t);                               \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                \
  template Tensor<T> sum(const Tensor<T>&);                                                           \
  template Tensor<T> mean(const Tensor<T>&);                                                          \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);

NCADIFF_INSTANTIATE_OPS(float)
NCADIFF_INSTANTIATE_OPS(double)

}  // namespace ncadiff
