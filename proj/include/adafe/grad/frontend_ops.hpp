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

// Differentiable pieces of the front-end: Gabor re-synthesis from Q,
// same-length convolution, channel differencing, octave centroid
// magnitudes, spectral-centroid deviation and the level rule.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "adafe/features.hpp"
#include "adafe/grad/ops.hpp"
#include "adafe/kernels.hpp"
#include "adafe/spectral.hpp"

namespace adafe::grad {

// Q [B, A] -> taps [B, A, P]. synth must outlive the backward pass.
template <class T>
Var<T> gabor_taps(Var<T> q, const kernels::GaborSynth<T>& synth) {
  const Shape& s = q.shape();
  require(s.size() == 2 && s[1] == synth.channels(), Errc::kShapeMismatch,
          [&] { return "gabor_taps expects [B, " + std::to_string(synth.channels()) + "], got " + shape_str(s); });
  const std::size_t B = s[0], A = s[1], P = synth.taps();
  const auto& qv = q.value();
  std::vector<T> y(B * A * P);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t a = 0; a < A; ++a) synth.synth(a, qv[b * A + a], y.data() + (b * A + a) * P);
  const std::size_t qid = q.id;
  const auto* sp = &synth;
  return q.tape->push("gabor_taps", {B, A, P}, std::move(y), q.requires_grad(),
                      [qid, sp, B, A, P](Tape<T>& t, std::size_t self) {
                        const auto& g = t.node(self).grad;
                        const auto& taps = t.node(self).value;
                        const auto& qv2 = t.node(qid).value;
                        auto& gq = t.grad_buffer(qid);
                        std::vector<T> d(P);
                        for (std::size_t b = 0; b < B; ++b)
                          for (std::size_t a = 0; a < A; ++a) {
                            const std::size_t r = b * A + a;
                            sp->synth_dq(a, qv2[r], taps.data() + r * P, d.data());
                            T acc = 0;
                            for (std::size_t p = 0; p < P; ++p) acc += g[r * P + p] * d[p];
                            gq[r] += acc;
                          }
                      });
}

// Same-length centered convolution of signal [B, A, F] (or [B, 1, F],
// shared by every channel) with per-row taps [B, A, P].
template <class T>
Var<T> conv_same(Var<T> signal, Var<T> taps) {
  Tape<T>& tape = detail::same_tape(signal, taps);
  const Shape& ss = signal.shape();
  const Shape& ts = taps.shape();
  require(ss.size() == 3 && ts.size() == 3 && ss[0] == ts[0] && (ss[1] == ts[1] || ss[1] == 1),
          Errc::kShapeMismatch, [&] { return "conv_same " + shape_str(ss) + " with taps " + shape_str(ts); });
  const std::size_t B = ts[0], A = ts[1], P = ts[2], F = ss[2];
  const bool shared = ss[1] == 1 && A != 1;
  const auto& sv = signal.value();
  const auto& tv = taps.value();
  std::vector<T> y(B * A * F);
  kernels::SameConv<T> conv(F, P);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t a = 0; a < A; ++a) {
      if (!shared || a == 0) conv.load(sv.data() + (b * ss[1] + (shared ? 0 : a)) * F);
      conv.forward(tv.data() + (b * A + a) * P, y.data() + (b * A + a) * F);
    }
  const bool rg = signal.requires_grad() || taps.requires_grad();
  const std::size_t sid = signal.id, tid = taps.id;
  const std::size_t S1 = ss[1];
  return tape.push(
      "conv_same", {B, A, F}, std::move(y), rg,
      [sid, tid, B, A, P, F, S1, shared](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        const auto& sv2 = t.node(sid).value;
        const auto& tv2 = t.node(tid).value;
        if (t.node(tid).requires_grad) {
          auto& gt = t.grad_buffer(tid);
          kernels::SameConv<T> conv(F, P);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t a = 0; a < A; ++a) {
              if (!shared || a == 0) conv.load(sv2.data() + (b * S1 + (shared ? 0 : a)) * F);
              conv.taps_grad(g.data() + (b * A + a) * F, gt.data() + (b * A + a) * P);
            }
        }
        if (t.node(sid).requires_grad) {
          // d out[f] / d x[j] = w[f + c - j]
          auto& gs = t.grad_buffer(sid);
          const long c = static_cast<long>((P - 1) / 2);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t a = 0; a < A; ++a) {
              const T* w = tv2.data() + (b * A + a) * P;
              const T* go = g.data() + (b * A + a) * F;
              T* gx = gs.data() + (b * S1 + (shared ? 0 : a)) * F;
              for (std::size_t f = 0; f < F; ++f)
                for (std::size_t p = 0; p < P; ++p) {
                  const long j = static_cast<long>(f) + c - static_cast<long>(p);
                  if (j >= 0 && j < static_cast<long>(F)) gx[j] += go[f] * w[p];
                }
            }
        }
      });
}

// Differences adjacent channels of x [B, C, F] k times -> [B, C - k, F].
template <class T>
Var<T> spatial_diff(Var<T> x, std::size_t k) {
  const Shape& s = x.shape();
  require(s.size() == 3, Errc::kShapeMismatch, "spatial_diff expects [B, C, F]");
  require(k < s[1], Errc::kOrderTooHigh, [&] { return "diff order " + std::to_string(k); });
  const std::size_t B = s[0], C = s[1], F = s[2];
  const auto& xv = x.value();
  std::vector<T> y(B * (C - k) * F);
  for (std::size_t b = 0; b < B; ++b)
    adafe::spatial_diff_frame(xv.data() + b * C * F, C, F, k, y.data() + b * (C - k) * F);
  const std::size_t xid = x.id;
  return x.tape->push("spatial_diff", {B, C - k, F}, std::move(y), x.requires_grad(),
                      [xid, B, C, F, k](Tape<T>& t, std::size_t self) {
                        const auto& g = t.node(self).grad;
                        auto& gx = t.grad_buffer(xid);
                        std::vector<T> work(C * F);
                        for (std::size_t b = 0; b < B; ++b) {
                          std::fill(work.begin(), work.end(), T(0));
                          std::copy_n(g.data() + b * (C - k) * F, (C - k) * F, work.begin());
                          // Undo one differencing pass at a time, widest last.
                          for (std::size_t c_now = C - k; c_now < C; ++c_now) {
                            for (std::size_t c = c_now; c-- > 0;) {
                              for (std::size_t f = 0; f < F; ++f) {
                                const T gc = work[c * F + f];
                                work[(c + 1) * F + f] += gc;
                                work[c * F + f] = -gc;
                              }
                            }
                          }
                          for (std::size_t i = 0; i < C * F; ++i) gx[b * C * F + i] += work[i];
                        }
                      });
}

// Octave centroid magnitudes of every row of x [B, A, F] -> [B, A, 5], using
// the smoothed, Hann-windowed 512-point magnitude envelope.
template <class T>
Var<T> octave_cm(Var<T> x, double fs = kTargetRate) {
  const Shape& s = x.shape();
  require(s.size() == 3, Errc::kShapeMismatch, "octave_cm expects [B, A, F]");
  const std::size_t rows = s[0] * s[1], F = s[2];
  auto spec = std::make_shared<spectral::MagnitudeSpectrum<T>>(F, kEnvelopeFft, kEnvelopeWindow);
  const std::size_t nb = spec->bins();
  const OctaveBins ob = OctaveBins::make(kEnvelopeFft, fs);
  auto weight = std::make_shared<std::vector<T>>(ob.weight.begin(), ob.weight.end());
  const auto& xv = x.value();
  std::vector<T> y(rows * kOctaves);
  std::vector<T> spectra(x.requires_grad() ? rows * 2 * nb : 0);
  std::vector<T> mag(nb), env(nb);
  for (std::size_t r = 0; r < rows; ++r) {
    spec->forward(xv.data() + r * F, mag.data(), spectra.empty() ? nullptr : spectra.data() + r * 2 * nb);
    smooth3(mag.data(), nb, env.data());
    for (std::size_t j = 0; j < kOctaves; ++j)
      y[r * kOctaves + j] = adafe::detail::octave_sum(env.data(), ob.lo[j], ob.hi[j], weight->data());
  }
  const std::size_t xid = x.id;
  return x.tape->push(
      "octave_cm", {s[0], s[1], kOctaves}, std::move(y), x.requires_grad(),
      [xid, rows, F, nb, ob, weight, spec, spectra = std::move(spectra)](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        auto& gx = t.grad_buffer(xid);
        const T* w = weight->data();
        std::vector<T> g_env(nb), g_mag(nb);
        for (std::size_t r = 0; r < rows; ++r) {
          std::fill(g_env.begin(), g_env.end(), T(0));
          std::fill(g_mag.begin(), g_mag.end(), T(0));
          for (std::size_t j = 0; j < kOctaves; ++j) {
            const T gj = g[r * kOctaves + j];
            for (std::size_t k = ob.lo[j]; k < ob.hi[j]; ++k) g_env[k] = gj * w[k];
          }
          smooth3_backward(g_env.data(), nb, g_mag.data());
          spec->backward(spectra.data() + r * 2 * nb, g_mag.data(), gx.data() + r * F);
        }
      });
}

// Hann-windowed 256-point spectral centroid of each row of x [B, A, F],
// minus the channel center, over fs / 2 -> [B, A]. Silent rows give 0.
inline constexpr std::size_t kFmFft = 256;

template <class T>
Var<T> centroid_deviation(Var<T> x, std::span<const double> centers, double fs = kTargetRate) {
  const Shape& s = x.shape();
  require(s.size() == 3 && s[1] == centers.size(), Errc::kShapeMismatch,
          "centroid_deviation expects [B, A, F] with A centers");
  const std::size_t B = s[0], A = s[1], F = s[2];
  const std::size_t n_fft = std::max<std::size_t>(kFmFft, F + (F % 2));
  auto spec = std::make_shared<spectral::MagnitudeSpectrum<T>>(F, n_fft, spectral::Window::kHann);
  const std::size_t nb = spec->bins();
  const T nyq = static_cast<T>(fs / 2.0);
  auto freq = std::make_shared<std::vector<T>>(nb);
  for (std::size_t k = 0; k < nb; ++k) (*freq)[k] = static_cast<T>(bin_hz(k, n_fft, fs));
  const auto& xv = x.value();
  std::vector<T> y(B * A);
  const bool rg = x.requires_grad();
  std::vector<T> spectra(rg ? B * A * 2 * nb : 0), sums(B * A), sc(B * A);
  std::vector<T> mag(nb);
  for (std::size_t r = 0; r < B * A; ++r) {
    spec->forward(xv.data() + r * F, mag.data(), rg ? spectra.data() + r * 2 * nb : nullptr);
    T num = 0, den = 0;
    for (std::size_t k = 0; k < nb; ++k) {
      num += (*freq)[k] * mag[k];
      den += mag[k];
    }
    sums[r] = den;
    sc[r] = den > std::numeric_limits<T>::min() ? num / den : T(0);
    y[r] = den > std::numeric_limits<T>::min() ? (sc[r] - static_cast<T>(centers[r % A])) / nyq : T(0);
  }
  const std::size_t xid = x.id;
  return x.tape->push(
      "centroid_deviation", {B, A}, std::move(y), rg,
      [xid, B, A, F, nb, nyq, freq, spec, spectra = std::move(spectra), sums = std::move(sums),
       sc = std::move(sc)](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        auto& gx = t.grad_buffer(xid);
        std::vector<T> g_mag(nb);
        for (std::size_t r = 0; r < B * A; ++r) {
          if (!(sums[r] > std::numeric_limits<T>::min())) continue;
          const T k0 = g[r] / (nyq * sums[r]);
          for (std::size_t k = 0; k < nb; ++k) g_mag[k] = k0 * ((*freq)[k] - sc[r]);
          spec->backward(spectra.data() + r * 2 * nb, g_mag.data(), gx.data() + r * F);
        }
      });
}

// Level rule in dB: q_hi at or below e_lo, q_lo at or above e_hi, linear in
// between.
struct LdaKnees {
  double e_lo = -80.0;
  double e_hi = -20.0;
  double q_lo = 0.6;
  double q_hi = 4.8;

  double operator()(double e_db) const {
    if (e_db <= e_lo) return q_hi;
    if (e_db >= e_hi) return q_lo;
    return q_hi + (e_db - e_lo) * (q_lo - q_hi) / (e_hi - e_lo);
  }
  double slope(double e_db) const {
    return (e_db > e_lo && e_db < e_hi) ? (q_lo - q_hi) / (e_hi - e_lo) : 0.0;
  }
};

template <class T>
Var<T> lda(Var<T> e_db, LdaKnees knees) {
  return detail::unary<T>(
      "lda", e_db, [knees](T v) { return static_cast<T>(knees(v)); },
      [knees](T v, T) { return static_cast<T>(knees.slope(v)); });
}

}  // namespace adafe::grad
