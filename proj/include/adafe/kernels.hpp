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

// Inner loops shared by the inference path and the autodiff ops.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace adafe::kernels {

#if defined(__GNUC__)
template <class T>
struct Simd {
  typedef T type __attribute__((vector_size(64)));
  static constexpr std::size_t kWidth = 64 / sizeof(T);
  static type load(const T* p) {
    type v;
    std::memcpy(&v, p, sizeof v);
    return v;
  }
};

// out[i] = sum_k a[k] * sig[i + k] for i < n_out. sig must be readable up to
// index round_up(n_out, kWidth) + n_a.
template <class T, std::size_t NV>
inline void xcorr_block(const T* a, std::size_t n_a, const T* sig, std::size_t i0,
                        T* out, std::size_t n_keep) {
  using S = Simd<T>;
  typename S::type acc[NV];
#pragma GCC unroll 16
  for (std::size_t j = 0; j < NV; ++j) acc[j] = typename S::type{};
  const T* base = sig + i0;
  for (std::size_t k = 0; k < n_a; ++k) {
    const T ak = a[k];
    const T* sp = base + k;
#pragma GCC unroll 16
    for (std::size_t j = 0; j < NV; ++j) acc[j] += ak * S::load(sp + j * S::kWidth);
  }
  T tmp[NV * S::kWidth];
  std::memcpy(tmp, acc, sizeof acc);
  std::memcpy(out + i0, tmp, sizeof(T) * n_keep);
}

namespace detail {

template <class T, std::size_t... NV>
inline void xcorr_dispatch(std::size_t nv, const T* a, std::size_t n_a, const T* sig, std::size_t i0, T* out,
                           std::size_t n_keep, std::index_sequence<NV...>) {
  ((nv == NV + 1 ? (xcorr_block<T, NV + 1>(a, n_a, sig, i0, out, n_keep), true) : false) || ...);
}

}  // namespace detail

// Whole rows of up to kMaxBlock vectors stay in registers for the full tap
// loop; longer outputs are split into such rows.
template <class T>
inline void xcorr(const T* a, std::size_t n_a, const T* sig, std::size_t n_out, T* out) {
  constexpr std::size_t W = Simd<T>::kWidth, kMaxBlock = 12;
  for (std::size_t i = 0; i < n_out; i += kMaxBlock * W) {
    const std::size_t keep = std::min(n_out - i, kMaxBlock * W);
    detail::xcorr_dispatch<T>((keep + W - 1) / W, a, n_a, sig, i, out, keep,
                              std::make_index_sequence<kMaxBlock>{});
  }
}

inline constexpr std::size_t kSimdSlack = 64;
#else
template <class T>
inline void xcorr(const T* a, std::size_t n_a, const T* sig, std::size_t n_out, T* out) {
  for (std::size_t i = 0; i < n_out; ++i) {
    T acc = 0;
    for (std::size_t k = 0; k < n_a; ++k) acc += a[k] * sig[i + k];
    out[i] = acc;
  }
}
inline constexpr std::size_t kSimdSlack = 0;
#endif

// Same-length convolution with centered alignment and zero extension:
//   out[f] = sum_p taps[p] * x[f + c - p],  c = (P - 1) / 2.
// A Conv object owns the padded scratch so repeated calls do not allocate.
template <class T>
class SameConv {
 public:
  SameConv(std::size_t frame_len, std::size_t taps)
      : frame_len_(frame_len),
        taps_(taps),
        center_((taps - 1) / 2),
        padded_(frame_len + 2 * taps + 2 * kSimdSlack, T(0)),
        reversed_(std::max(taps, frame_len)) {}

  std::size_t frame_len() const { return frame_len_; }
  std::size_t taps() const { return taps_; }

  // Loads a signal frame; subsequent forward/taps_grad calls use it.
  void load(const T* x) {
    std::fill(padded_.begin(), padded_.end(), T(0));
    std::copy(x, x + frame_len_, padded_.begin() + taps_);
  }

  void forward(const T* w, T* out) {
    for (std::size_t k = 0; k < taps_; ++k) reversed_[k] = w[taps_ - 1 - k];
    xcorr(reversed_.data(), taps_, signal_origin(), frame_len_, out);
  }

  // Accumulates d(loss)/d(taps) given d(loss)/d(out) for the loaded signal.
  void taps_grad(const T* g_out, T* g_taps) {
    xcorr(g_out, frame_len_, signal_origin(), taps_, reversed_.data());
    for (std::size_t p = 0; p < taps_; ++p) g_taps[p] += reversed_[taps_ - 1 - p];
  }

 private:
  const T* signal_origin() const { return padded_.data() + center_ + 1; }

  std::size_t frame_len_, taps_, center_;
  std::vector<T> padded_;
  std::vector<T> reversed_;
};

// Plain reference convolution, used by tests and by callers that only need a
// handful of outputs.
template <class T>
inline void same_conv_direct(std::span<const T> x, std::span<const T> w, std::span<T> out) {
  const std::size_t F = x.size(), P = w.size(), c = (P - 1) / 2;
  for (std::size_t f = 0; f < F; ++f) {
    T acc = 0;
    for (std::size_t p = 0; p < P; ++p) {
      const long j = static_cast<long>(f + c) - static_cast<long>(p);
      if (j >= 0 && j < static_cast<long>(F)) acc += w[p] * x[j];
    }
    out[f] = acc;
  }
}

inline constexpr double kTapFloor = 1e-30;

// Tap offsets used by every Gabor filter: z_i = i - (P - 1) / 2, so the
// Gaussian envelope peaks mid-filter.
inline double gabor_offset(std::size_t i, std::size_t taps) {
  return static_cast<double>(i) - 0.5 * static_cast<double>(taps - 1);
}

// b = sqrt(2 pi) * BW / (2 fs) with BW = fc / Q.
inline double gabor_b(double fc, double q, double fs) {
  return std::sqrt(2.0 * std::numbers::pi) * (fc / q) / (2.0 * fs);
}

// Per-channel tables for regenerating Gabor taps at a new Q each frame:
// taps[i] = exp(-(b z_i)^2) cos(Omega_c z_i).
template <class T>
class GaborSynth {
 public:
  GaborSynth() = default;
  GaborSynth(std::span<const double> centers, std::size_t taps, double fs)
      : taps_(taps), fs_(fs), centers_(centers.begin(), centers.end()),
        cos_(centers.size() * taps), zsq_(taps) {
    for (std::size_t i = 0; i < taps; ++i) {
      const double z = gabor_offset(i, taps);
      zsq_[i] = z * z;
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double omega = 2.0 * std::numbers::pi * centers[c] / fs;
      for (std::size_t i = 0; i < taps; ++i) {
        cos_[c * taps + i] = std::cos(omega * gabor_offset(i, taps));
      }
    }
  }

  std::size_t channels() const { return centers_.size(); }
  std::size_t taps() const { return taps_; }
  double fs() const { return fs_; }
  const std::vector<double>& centers() const { return centers_; }

  // The Gaussian is built outward from the middle tap with the ratio
  // recurrence g(z + 1) / g(z) = exp(-b^2 (2 z + 1)), so only three exp()
  // calls are needed per channel and far tails underflow cleanly to zero.
  void synth(std::size_t channel, double q, T* out) const {
    const double b = gabor_b(centers_[channel], q, fs_);
    const double b2 = b * b;
    const double* cs = cos_.data() + channel * taps_;
    const std::size_t mid = taps_ / 2;
    const double z0 = gabor_offset(mid, taps_);
    double g = std::exp(-b2 * z0 * z0);
    double r = std::exp(-b2 * (2.0 * z0 + 1.0));
    const double rr = std::exp(-2.0 * b2);
    for (std::size_t i = mid; i < taps_; ++i) {
      // Tails below kTapFloor are zeroed; subnormal taps would slow every
      // multiply that touches them.
      if (g < kTapFloor) g = 0.0;
      out[i] = static_cast<T>(g * cs[i]);
      out[taps_ - 1 - i] = static_cast<T>(g * cs[taps_ - 1 - i]);
      g *= r;
      r *= rr;
    }
  }

  // d taps / d q = taps * 2 b^2 z^2 / q (b scales as 1/q).
  void synth_dq(std::size_t channel, double q, const T* taps, T* out) const {
    const double b = gabor_b(centers_[channel], q, fs_);
    const double scale = 2.0 * b * b / q;
    for (std::size_t i = 0; i < taps_; ++i) {
      out[i] = static_cast<T>(static_cast<double>(taps[i]) * scale * zsq_[i]);
    }
  }

 private:
  std::size_t taps_ = 0;
  double fs_ = 16000.0;
  std::vector<double> centers_;
  std::vector<double> cos_;
  std::vector<double> zsq_;
};

}  // namespace adafe::kernels
