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

// Parameterized Gabor band-pass filters, filterbanks built from them, and
// frame-wise filtering plus channel differencing.
//
// A filter with center fc and quality factor Q has taps
//   W[z] = exp(-(b z)^2) cos(Omega_c z),
//   Omega_c = 2 pi fc / fs,  b = sqrt(2 pi) BW / (2 fs),  BW = fc / Q,
// with z measured from the middle tap. Its unnormalized gain at fc is close
// to sqrt(2) pi Q / Omega_c for Q >= 0.5, so gain grows linearly with Q while
// the bandwidth shrinks as 1/Q.

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "adafe/audio_io.hpp"
#include "adafe/error.hpp"
#include "adafe/kernels.hpp"

namespace adafe {

enum class Spacing { kLinearHz };
enum class Normalization { kNone, kPeakUnity };

struct GaborFilterSpec {
  double fc = 1000.0;
  double q = 2.0;
  std::size_t taps = 150;
  double fs = kTargetRate;

  double bandwidth() const { return fc / q; }
  double omega() const { return 2.0 * std::numbers::pi * fc / fs; }

  void validate() const {
    const std::string where = "fc=" + std::to_string(fc) + " q=" + std::to_string(q);
    require(fs > 0.0, Errc::kInvalidSpec, "sample rate must be positive");
    require(fc > 0.0 && fc < fs / 2.0, Errc::kInvalidSpec, [&] { return "center outside (0, fs/2): " + where; });
    require(q >= 0.5, Errc::kInvalidSpec, [&] { return "q below 0.5: " + where; });
    require(taps >= 3, Errc::kInvalidSpec, "fewer than 3 taps");
    require(bandwidth() < fs / 2.0, Errc::kInvalidSpec, [&] { return "bandwidth reaches Nyquist: " + where; });
  }
};

struct GaborFilter {
  GaborFilterSpec spec;
  std::vector<double> taps;
  double unnormalized_gain = 0.0;  // |DTFT| at fc before any scaling
  double scale = 1.0;              // factor applied to the raw taps
};

// Discrete-time Fourier transform of taps at omega (radians per sample),
// indexing taps from 0.
inline std::complex<double> dtft(std::span<const double> taps, double omega) {
  std::complex<double> acc = 0.0;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    acc += taps[i] * std::polar(1.0, -omega * static_cast<double>(i));
  }
  return acc;
}

inline double gain_at(std::span<const double> taps, double freq_hz, double fs) {
  return std::abs(dtft(taps, 2.0 * std::numbers::pi * freq_hz / fs));
}

// Closed-form center gain sqrt(2) pi Q / Omega_c.
inline double approx_center_gain(double q, double fc, double fs) {
  return std::sqrt(2.0) * std::numbers::pi * q / (2.0 * std::numbers::pi * fc / fs);
}

inline GaborFilter synth_gabor(const GaborFilterSpec& spec,
                               Normalization norm = Normalization::kPeakUnity) {
  spec.validate();
  GaborFilter f;
  f.spec = spec;
  f.taps.resize(spec.taps);
  const double b = kernels::gabor_b(spec.fc, spec.q, spec.fs);
  const double omega = spec.omega();
  for (std::size_t i = 0; i < spec.taps; ++i) {
    const double z = kernels::gabor_offset(i, spec.taps);
    f.taps[i] = std::exp(-(b * z) * (b * z)) * std::cos(omega * z);
  }
  f.unnormalized_gain = std::abs(dtft(f.taps, omega));
  if (norm == Normalization::kPeakUnity) {
    f.scale = 1.0 / f.unnormalized_gain;
    for (double& t : f.taps) t *= f.scale;
  }
  return f;
}

// |DTFT| sampled at n_points frequencies spanning [0, fs/2] inclusive.
inline std::vector<double> freq_response(std::span<const double> taps, std::size_t n_points) {
  require(n_points >= 64, Errc::kInvalidConfig, "freq_response needs at least 64 points");
  std::vector<double> mag(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double omega = std::numbers::pi * static_cast<double>(i) / (n_points - 1);
    mag[i] = std::abs(dtft(taps, omega));
  }
  return mag;
}

struct FilterbankLayout {
  std::vector<double> centers;
  double f_lo = 60.0;
  double f_hi = 7800.0;
  double fs = kTargetRate;
  Spacing spacing = Spacing::kLinearHz;
  Normalization normalization = Normalization::kPeakUnity;

  std::size_t size() const { return centers.size(); }

  // centers[i] = f_lo + i (f_hi - f_lo) / (n - 1); a single filter sits at f_lo.
  static FilterbankLayout linear(std::size_t n, double f_lo, double f_hi, double fs = kTargetRate,
                                 Normalization norm = Normalization::kPeakUnity) {
    require(n >= 1, Errc::kInvalidSpec, "filterbank needs at least one filter");
    FilterbankLayout l;
    l.f_lo = f_lo;
    l.f_hi = f_hi;
    l.fs = fs;
    l.normalization = norm;
    l.centers.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      l.centers[i] = n == 1 ? f_lo : f_lo + static_cast<double>(i) * (f_hi - f_lo) / (n - 1);
    }
    l.validate();
    return l;
  }

  void validate() const {
    require(!centers.empty(), Errc::kInvalidSpec, "empty filterbank layout");
    require(f_lo >= 50.0, Errc::kInvalidSpec, "f_lo below 50 Hz");
    require(f_hi < fs / 2.0 && f_lo <= f_hi, Errc::kInvalidSpec, "f_hi must lie in [f_lo, fs/2)");
    if (centers.size() < 2) return;
    const double step = centers[1] - centers[0];
    for (std::size_t i = 1; i < centers.size(); ++i) {
      const double d = centers[i] - centers[i - 1];
      require(d > 0.0, Errc::kInvalidSpec, "centers must increase strictly");
      require(std::abs(d - step) <= 1e-9 * std::max(1.0, step), Errc::kInvalidSpec,
              "linear spacing requires uniform steps");
    }
  }
};

inline std::vector<GaborFilter> build_bank(const FilterbankLayout& layout,
                                           std::span<const double> q, std::size_t taps = 150) {
  require(q.size() == layout.size(), Errc::kShapeMismatch,
          [&] { return "q vector has " + std::to_string(q.size()) + " entries for " +
              std::to_string(layout.size()) + " filters"; });
  std::vector<GaborFilter> bank;
  bank.reserve(layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    try {
      bank.push_back(synth_gabor({layout.centers[i], q[i], taps, layout.fs}, layout.normalization));
    } catch (const Error& e) {
      fail(e.code(), "filter " + std::to_string(i) + ": " + e.what());
    }
  }
  return bank;
}

// T x C x F tensor of per-frame subband signals.
template <class T>
struct SubbandTensor {
  std::size_t frames = 0;
  std::size_t channels = 0;
  std::size_t frame_len = 0;
  std::vector<T> data;
  std::vector<double> channel_centers;

  SubbandTensor() = default;
  SubbandTensor(std::size_t t, std::size_t c, std::size_t f, std::vector<double> centers = {})
      : frames(t), channels(c), frame_len(f), data(t * c * f, T(0)),
        channel_centers(std::move(centers)) {}

  T& at(std::size_t t, std::size_t c, std::size_t f) {
    return data[(t * channels + c) * frame_len + f];
  }
  T at(std::size_t t, std::size_t c, std::size_t f) const {
    return data[(t * channels + c) * frame_len + f];
  }
  // One frame as a C x F row-major block.
  std::span<T> frame(std::size_t t) { return {data.data() + t * channels * frame_len, channels * frame_len}; }
  std::span<const T> frame(std::size_t t) const {
    return {data.data() + t * channels * frame_len, channels * frame_len};
  }
};

// Midpoints of adjacent centers, applied k times; each differenced channel
// sits between its two parents.
inline std::vector<double> diff_centers(std::vector<double> centers, std::size_t k) {
  for (std::size_t step = 0; step < k; ++step) {
    for (std::size_t c = 0; c + 1 < centers.size(); ++c) centers[c] = 0.5 * (centers[c] + centers[c + 1]);
    centers.pop_back();
  }
  return centers;
}

// Differences adjacent channels of one C x F frame k times, writing a
// (C - k) x F block. in and out must not alias.
template <class T>
void spatial_diff_frame(const T* in, std::size_t channels, std::size_t frame_len, std::size_t k,
                        T* out) {
  std::vector<T> work(in, in + channels * frame_len);
  std::size_t c_now = channels;
  for (std::size_t step = 0; step < k; ++step) {
    for (std::size_t c = 0; c + 1 < c_now; ++c) {
      T* dst = work.data() + c * frame_len;
      const T* nxt = work.data() + (c + 1) * frame_len;
      for (std::size_t f = 0; f < frame_len; ++f) dst[f] = nxt[f] - dst[f];
    }
    --c_now;
  }
  std::copy(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(c_now * frame_len), out);
}

template <class T>
SubbandTensor<T> spatial_diff(const SubbandTensor<T>& x, std::size_t k) {
  require(k < x.channels, Errc::kOrderTooHigh,
          [&] { return "order " + std::to_string(k) + " needs more than " + std::to_string(x.channels) +
              " channels"; });
  if (k == 0) return x;
  SubbandTensor<T> y(x.frames, x.channels - k, x.frame_len, diff_centers(x.channel_centers, k));
  for (std::size_t t = 0; t < x.frames; ++t) {
    spatial_diff_frame(x.frame(t).data(), x.channels, x.frame_len, k, y.frame(t).data());
  }
  return y;
}

// Applies every filter of the bank to one frame (same-length, centered).
template <class T>
class FrameFilter {
 public:
  FrameFilter(const std::vector<GaborFilter>& bank, std::size_t frame_len)
      : conv_(frame_len, bank.empty() ? 1 : bank.front().taps.size()) {
    require(!bank.empty(), Errc::kInvalidSpec, "empty filterbank");
    taps_.reserve(bank.size() * conv_.taps());
    for (const auto& f : bank) {
      require(f.taps.size() == conv_.taps(), Errc::kShapeMismatch, "mixed filter lengths in bank");
      for (double t : f.taps) taps_.push_back(std::abs(t) < kernels::kTapFloor ? T(0) : static_cast<T>(t));
    }
    for (const auto& f : bank) centers_.push_back(f.spec.fc);
  }

  std::size_t channels() const { return centers_.size(); }
  const std::vector<double>& centers() const { return centers_; }

  // frame: F samples; out: channels() x F.
  template <class In>
  void apply(std::span<const In> frame, T* out) {
    std::vector<T> x(frame.begin(), frame.end());
    conv_.load(x.data());
    for (std::size_t c = 0; c < channels(); ++c) {
      conv_.forward(taps_.data() + c * conv_.taps(), out + c * conv_.frame_len());
    }
  }

 private:
  kernels::SameConv<T> conv_;
  std::vector<T> taps_;
  std::vector<double> centers_;
};

template <class T = double>
SubbandTensor<T> filter_frames(const FrameSequence& frames, const std::vector<GaborFilter>& bank) {
  FrameFilter<T> filt(bank, frames.frame_len);
  SubbandTensor<T> y(frames.num_frames, filt.channels(), frames.frame_len, filt.centers());
  for (std::size_t t = 0; t < frames.num_frames; ++t) filt.apply(frames.frame(t), y.frame(t).data());
  return y;
}

}  // namespace adafe
