// Copyright (c) 2026 The adafe Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense tensor ops with hand-written adjoints.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "adafe/grad/tape.hpp"

namespace adafe::grad {

enum class Mode { kTrain, kInfer };

namespace detail {

// Number of times b repeats inside a when b's shape is a suffix of a's.
inline std::size_t broadcast_repeats(const Shape& a, const Shape& b, const char* op) {
  bool suffix = b.size() <= a.size();
  for (std::size_t i = 0; suffix && i < b.size(); ++i) {
    suffix = a[a.size() - b.size() + i] == b[i];
  }
  require(suffix, Errc::kShapeMismatch,
          [&] { return std::string(op) + ": cannot broadcast " + shape_str(b) + " into " + shape_str(a); });
  return numel(a) / std::max<std::size_t>(numel(b), 1);
}

template <class T>
Tape<T>& same_tape(Var<T> a, Var<T> b) {
  require(a.tape == b.tape, Errc::kShapeMismatch, "operands live on different tapes");
  return *a.tape;
}

template <class T, class Fwd, class Bwd>
Var<T> unary(const char* op, Var<T> x, Fwd fwd, Bwd dydx) {
  Tape<T>& tape = *x.tape;
  const auto& xv = x.value();
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(xv[i]);
  const std::size_t xid = x.id;
  return tape.push(op, x.shape(), std::move(y), x.requires_grad(),
                   [xid, dydx](Tape<T>& t, std::size_t self) {
                     const auto& g = t.node(self).grad;
                     const auto& yv = t.node(self).value;
                     const auto& xv2 = t.node(xid).value;
                     auto& gx = t.grad_buffer(xid);
                     for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dydx(xv2[i], yv[i]);
                   });
}

}  // namespace detail

// a + b, b broadcast over leading dimensions of a.
template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  const std::size_t reps = detail::broadcast_repeats(a.shape(), b.shape(), "add");
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t nb = bv.size();
  std::vector<T> y(av.size());
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t i = 0; i < nb; ++i) y[r * nb + i] = av[r * nb + i] + bv[i];
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::size_t aid = a.id, bid = b.id;
  return tape.push("add", a.shape(), std::move(y), rg,
                   [aid, bid, reps, nb](Tape<T>& t, std::size_t self) {
                     const auto& g = t.node(self).grad;
                     if (t.node(aid).requires_grad) {
                       auto& ga = t.grad_buffer(aid);
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     }
                     if (t.node(bid).requires_grad) {
                       auto& gb = t.grad_buffer(bid);
                       for (std::size_t r = 0; r < reps; ++r)
                         for (std::size_t i = 0; i < nb; ++i) gb[i] += g[r * nb + i];
                     }
                   });
}

// Elementwise a * b, b broadcast over leading dimensions of a.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  const std::size_t reps = detail::broadcast_repeats(a.shape(), b.shape(), "mul");
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t nb = bv.size();
  std::vector<T> y(av.size());
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t i = 0; i < nb; ++i) y[r * nb + i] = av[r * nb + i] * bv[i];
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::size_t aid = a.id, bid = b.id;
  return tape.push("mul", a.shape(), std::move(y), rg,
                   [aid, bid, reps, nb](Tape<T>& t, std::size_t self) {
                     const auto& g = t.node(self).grad;
                     const auto& av2 = t.node(aid).value;
                     const auto& bv2 = t.node(bid).value;
                     if (t.node(aid).requires_grad) {
                       auto& ga = t.grad_buffer(aid);
                       for (std::size_t r = 0; r < reps; ++r)
                         for (std::size_t i = 0; i < nb; ++i) ga[r * nb + i] += g[r * nb + i] * bv2[i];
                     }
                     if (t.node(bid).requires_grad) {
                       auto& gb = t.grad_buffer(bid);
                       for (std::size_t r = 0; r < reps; ++r)
                         for (std::size_t i = 0; i < nb; ++i) gb[i] += g[r * nb + i] * av2[r * nb + i];
                     }
                   });
}

// scale * x + shift
template <class T>
Var<T> affine(Var<T> x, T scale, T shift) {
  return detail::unary<T>(
      "affine", x, [scale, shift](T v) { return scale * v + shift; },
      [scale](T, T) { return scale; });
}

// [M, K] x [K, N] -> [M, N]
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0], Errc::kShapeMismatch,
          [&] { return "matmul " + shape_str(sa) + " x " + shape_str(sb); });
  const std::size_t M = sa[0], K = sa[1], N = sb[1];
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<T> y(M * N, T(0));
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k) {
      const T amk = av[m * K + k];
      const T* brow = bv.data() + k * N;
      T* yrow = y.data() + m * N;
      for (std::size_t n = 0; n < N; ++n) yrow[n] += amk * brow[n];
    }
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::size_t aid = a.id, bid = b.id;
  return tape.push("matmul", {M, N}, std::move(y), rg,
                   [aid, bid, M, K, N](Tape<T>& t, std::size_t self) {
                     const auto& g = t.node(self).grad;
                     const auto& av2 = t.node(aid).value;
                     const auto& bv2 = t.node(bid).value;
                     if (t.node(aid).requires_grad) {
                       auto& ga = t.grad_buffer(aid);
                       for (std::size_t m = 0; m < M; ++m)
                         for (std::size_t k = 0; k < K; ++k) {
                           T acc = 0;
                           for (std::size_t n = 0; n < N; ++n) acc += g[m * N + n] * bv2[k * N + n];
                           ga[m * K + k] += acc;
                         }
                     }
                     if (t.node(bid).requires_grad) {
                       auto& gb = t.grad_buffer(bid);
                       for (std::size_t m = 0; m < M; ++m)
                         for (std::size_t k = 0; k < K; ++k) {
                           const T amk = av2[m * K + k];
                           for (std::size_t n = 0; n < N; ++n) gb[k * N + n] += amk * g[m * N + n];
                         }
                     }
                   });
}

template <class T>
Var<T> relu(Var<T> x) {
  return detail::unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> tanh(Var<T> x) {
  return detail::unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> square(Var<T> x) {
  return detail::unary<T>(
      "square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// Natural log; callers add their own floor.
template <class T>
Var<T> log(Var<T> x) {
  return detail::unary<T>(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

// Clamps to [lo, hi]; the gradient passes unchanged wherever the input was
// already inside the bounds and is zero where clamping changed the value.
template <class T>
Var<T> clamp_straight_through(Var<T> x, T lo, T hi) {
  return detail::unary<T>(
      "clamp_straight_through", x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

// Mean of all elements -> scalar.
template <class T>
Var<T> mean(Var<T> x) {
  const auto& xv = x.value();
  T acc = 0;
  for (T v : xv) acc += v;
  const std::size_t n = xv.size();
  const std::size_t xid = x.id;
  return x.tape->push("mean", {1}, {acc / static_cast<T>(n)}, x.requires_grad(),
                      [xid, n](Tape<T>& t, std::size_t self) {
                        const T g = t.node(self).grad[0] / static_cast<T>(n);
                        auto& gx = t.grad_buffer(xid);
                        for (auto& v : gx) v += g;
                      });
}

// Mean of squares over the last axis: [..., F] -> [...].
template <class T>
Var<T> mean_square(Var<T> x) {
  const Shape& s = x.shape();
  require(!s.empty(), Errc::kShapeMismatch, "mean_square of a scalar");
  const std::size_t F = s.back();
  const std::size_t rows = numel(s) / F;
  const auto& xv = x.value();
  std::vector<T> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (std::size_t f = 0; f < F; ++f) acc += xv[r * F + f] * xv[r * F + f];
    y[r] = acc / static_cast<T>(F);
  }
  Shape out(s.begin(), s.end() - 1);
  if (out.empty()) out = {1};
  const std::size_t xid = x.id;
  return x.tape->push("mean_square", out, std::move(y), x.requires_grad(),
                      [xid, rows, F](Tape<T>& t, std::size_t self) {
                        const auto& g = t.node(self).grad;
                        const auto& xv2 = t.node(xid).value;
                        auto& gx = t.grad_buffer(xid);
                        const T k = T(2) / static_cast<T>(F);
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t f = 0; f < F; ++f) gx[r * F + f] += g[r] * k * xv2[r * F + f];
                      });
}

// Concatenates along the last axis; leading dimensions must agree.
template <class T>
Var<T> concat_last(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(sa.size() == sb.size() && std::equal(sa.begin(), sa.end() - 1, sb.begin()),
          Errc::kShapeMismatch, [&] { return "concat_last " + shape_str(sa) + " with " + shape_str(sb); });
  const std::size_t na = sa.back(), nb = sb.back();
  const std::size_t rows = numel(sa) / na;
  std::vector<T> y(rows * (na + nb));
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * na, na, y.data() + r * (na + nb));
    std::copy_n(bv.data() + r * nb, nb, y.data() + r * (na + nb) + na);
  }
  Shape out = sa;
  out.back() = na + nb;
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::size_t aid = a.id, bid = b.id;
  return tape.push("concat_last", out, std::move(y), rg,
                   [aid, bid, rows, na, nb](Tape<T>& t, std::size_t self) {
                     const auto& g = t.node(self).grad;
                     if (t.node(aid).requires_grad) {
                       auto& ga = t.grad_buffer(aid);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t i = 0; i < na; ++i) ga[r * na + i] += g[r * (na + nb) + i];
                     }
                     if (t.node(bid).requires_grad) {
                       auto& gb = t.grad_buffer(bid);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t i = 0; i < nb; ++i) gb[r * nb + i] += g[r * (na + nb) + na + i];
                     }
                   });
}

// Same values, new shape of equal size.
template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
  require(numel(shape) == x.size(), Errc::kShapeMismatch,
          [&] { return "reshape " + shape_str(x.shape()) + " to " + shape_str(shape); });
  const std::size_t xid = x.id;
  return x.tape->push("reshape", std::move(shape), x.value(), x.requires_grad(),
                      [xid](Tape<T>& t, std::size_t self) {
                        const auto& g = t.node(self).grad;
                        auto& gx = t.grad_buffer(xid);
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                      });
}

// Views of running statistics owned elsewhere (usually a ParamStore).
template <class T>
struct BnRunning {
  std::span<T> mean;
  std::span<T> var;
};

// Batch normalisation over axis 0 of x [B, D] with per-feature affine
// (gamma, beta). Train mode normalises with the biased batch statistics and
// folds them into running with running = momentum * running + (1 -
// momentum) * batch; infer mode normalises with running.
template <class T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, BnRunning<T>& running, Mode mode,
                 T momentum = T(0.99), T eps = T(1e-5)) {
  Tape<T>& tape = *x.tape;
  const Shape& s = x.shape();
  require(s.size() == 2, Errc::kShapeMismatch, [&] { return "batchnorm expects [B, D], got " + shape_str(s); });
  const std::size_t B = s[0], D = s[1];
  require(gamma.size() == D && beta.size() == D && running.mean.size() == D &&
              running.var.size() == D,
          Errc::kShapeMismatch, "batchnorm parameter width");
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  std::vector<T> mu(D, T(0)), inv_std(D), xhat(B * D), y(B * D);
  if (mode == Mode::kTrain) {
    std::vector<T> var(D, T(0));
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t d = 0; d < D; ++d) mu[d] += xv[b * D + d];
    for (auto& m : mu) m /= static_cast<T>(B);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t d = 0; d < D; ++d) {
        const T c = xv[b * D + d] - mu[d];
        var[d] += c * c;
      }
    for (std::size_t d = 0; d < D; ++d) {
      var[d] /= static_cast<T>(B);
      inv_std[d] = T(1) / std::sqrt(var[d] + eps);
      running.mean[d] = momentum * running.mean[d] + (T(1) - momentum) * mu[d];
      running.var[d] = momentum * running.var[d] + (T(1) - momentum) * var[d];
    }
  } else {
    for (std::size_t d = 0; d < D; ++d) {
      mu[d] = running.mean[d];
      inv_std[d] = T(1) / std::sqrt(running.var[d] + eps);
    }
  }
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t d = 0; d < D; ++d) {
      const std::size_t i = b * D + d;
      xhat[i] = (xv[i] - mu[d]) * inv_std[d];
      y[i] = gv[d] * xhat[i] + bv[d];
    }
  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  const std::size_t xid = x.id, gid = gamma.id, bid = beta.id;
  const bool train = mode == Mode::kTrain;
  return tape.push(
      "batchnorm", s, std::move(y), rg,
      [xid, gid, bid, B, D, train, inv_std = std::move(inv_std), xhat = std::move(xhat)](
          Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        const auto& gv2 = t.node(gid).value;
        if (t.node(gid).requires_grad || t.node(bid).requires_grad) {
          std::vector<T> dg(D, T(0)), db(D, T(0));
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t d = 0; d < D; ++d) {
              dg[d] += g[b * D + d] * xhat[b * D + d];
              db[d] += g[b * D + d];
            }
          if (t.node(gid).requires_grad) {
            auto& gg = t.grad_buffer(gid);
            for (std::size_t d = 0; d < D; ++d) gg[d] += dg[d];
          }
          if (t.node(bid).requires_grad) {
            auto& gb = t.grad_buffer(bid);
            for (std::size_t d = 0; d < D; ++d) gb[d] += db[d];
          }
        }
        if (!t.node(xid).requires_grad) return;
        auto& gx = t.grad_buffer(xid);
        if (!train) {
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t d = 0; d < D; ++d) gx[b * D + d] += g[b * D + d] * gv2[d] * inv_std[d];
          return;
        }
        for (std::size_t d = 0; d < D; ++d) {
          T sum_dxhat = 0, sum_dxhat_xhat = 0;
          for (std::size_t b = 0; b < B; ++b) {
            const T dxh = g[b * D + d] * gv2[d];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xhat[b * D + d];
          }
          const T k = inv_std[d] / static_cast<T>(B);
          for (std::size_t b = 0; b < B; ++b) {
            const T dxh = g[b * D + d] * gv2[d];
            gx[b * D + d] += k * (static_cast<T>(B) * dxh - sum_dxhat - xhat[b * D + d] * sum_dxhat_xhat);
          }
        }
      });
}

// Mean softmax cross-entropy of logits [B, K] against integer labels.
template <class T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  require(s.size() == 2 && s[0] == labels.size(), Errc::kShapeMismatch,
          "softmax_cross_entropy expects [B, K] with B labels");
  const std::size_t B = s[0], K = s[1];
  const auto& lv = logits.value();
  std::vector<T> prob(B * K);
  T loss = 0;
  for (std::size_t b = 0; b < B; ++b) {
    require(labels[b] >= 0 && static_cast<std::size_t>(labels[b]) < K, Errc::kShapeMismatch,
            "label out of range");
    const T* row = lv.data() + b * K;
    const T mx = *std::max_element(row, row + K);
    T z = 0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t k = 0; k < K; ++k) prob[b * K + k] = std::exp(row[k] - lse);
    loss += lse - row[labels[b]];
  }
  loss /= static_cast<T>(B);
  std::vector<int> lab(labels.begin(), labels.end());
  const std::size_t lid = logits.id;
  return logits.tape->push("softmax_cross_entropy", {1}, {loss}, logits.requires_grad(),
                           [lid, B, K, prob = std::move(prob), lab = std::move(lab)](
                               Tape<T>& t, std::size_t self) {
                             const T g = t.node(self).grad[0] / static_cast<T>(B);
                             auto& gl = t.grad_buffer(lid);
                             for (std::size_t b = 0; b < B; ++b)
                               for (std::size_t k = 0; k < K; ++k) {
                                 const T onehot = static_cast<int>(k) == lab[b] ? T(1) : T(0);
                                 gl[b * K + k] += g * (prob[b * K + k] - onehot);
                               }
                           });
}

}  // namespace adafe::grad
