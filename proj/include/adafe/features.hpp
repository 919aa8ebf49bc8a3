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

// Per-frame features of adaptive-layer outputs: log subband energy and the
// spectral-envelope centroid magnitude (CM) over five octaves,
//   CM_j = sum_f f |E[f]| / sum_f f,   f in [f_lo(j), f_hi(j)).

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "adafe/audio_io.hpp"
#include "adafe/error.hpp"
#include "adafe/spectral.hpp"

namespace adafe {

inline constexpr std::size_t kEnvelopeFft = 512;
inline constexpr auto kEnvelopeWindow = spectral::Window::kHann;
inline constexpr std::size_t kOctaves = 5;
inline constexpr std::array<double, kOctaves + 1> kOctaveEdgesHz = {250, 500, 1000, 2000, 4000, 8000};
inline constexpr double kLogEnergyFloor = 1e-6;
inline constexpr std::size_t kFeaturesPerChannel = 1 + kOctaves;

inline double bin_hz(std::size_t k, std::size_t n_fft, double fs) {
  return static_cast<double>(k) * fs / static_cast<double>(n_fft);
}

// Half-open bin range [lo, hi) of each octave on an n_fft grid.
struct OctaveBins {
  std::array<std::size_t, kOctaves> lo{};
  std::array<std::size_t, kOctaves> hi{};
  std::size_t n_fft = kEnvelopeFft;
  double fs = kTargetRate;
  // f_k / sum of f over the bin's octave; 0 outside every octave.
  std::vector<double> weight;

  static OctaveBins make(std::size_t n_fft = kEnvelopeFft, double fs = kTargetRate) {
    OctaveBins ob;
    ob.n_fft = n_fft;
    ob.fs = fs;
    const std::size_t bins = n_fft / 2 + 1;
    for (std::size_t j = 0; j < kOctaves; ++j) {
      std::size_t k = 0;
      while (k < bins && bin_hz(k, n_fft, fs) < kOctaveEdgesHz[j]) ++k;
      ob.lo[j] = k;
      while (k < bins && bin_hz(k, n_fft, fs) < kOctaveEdgesHz[j + 1]) ++k;
      ob.hi[j] = k;
    }
    ob.weight.assign(bins, 0.0);
    for (std::size_t j = 0; j < kOctaves; ++j) {
      double den = 0.0;
      for (std::size_t k = ob.lo[j]; k < ob.hi[j]; ++k) den += bin_hz(k, n_fft, fs);
      if (den <= 0.0) continue;
      for (std::size_t k = ob.lo[j]; k < ob.hi[j]; ++k) ob.weight[k] = bin_hz(k, n_fft, fs) / den;
    }
    return ob;
  }
};

// 3-bin moving average; the two edge bins average their available neighbours.
template <class T>
void smooth3(const T* m, std::size_t n, T* out) {
  if (n == 1) {
    out[0] = m[0];
    return;
  }
  out[0] = (m[0] + m[1]) / T(2);
  for (std::size_t k = 1; k + 1 < n; ++k) out[k] = (m[k - 1] + m[k] + m[k + 1]) / T(3);
  out[n - 1] = (m[n - 2] + m[n - 1]) / T(2);
}

// Adjoint of smooth3: accumulates into g_m.
template <class T>
void smooth3_backward(const T* g_out, std::size_t n, T* g_m) {
  if (n == 1) {
    g_m[0] += g_out[0];
    return;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const T share = (k == 0 || k == n - 1) ? g_out[k] / T(2) : g_out[k] / T(3);
    if (k > 0) g_m[k - 1] += share;
    g_m[k] += share;
    if (k + 1 < n) g_m[k + 1] += share;
  }
}

// Spectral envelope: 3-bin smoothed magnitude of the 512-point zero-padded
// DFT of one Hann-windowed subband frame, bins at k * fs / 512 Hz.
template <class T>
std::vector<T> spectral_envelope(std::span<const T> frame) {
  require(frame.size() >= 8, Errc::kInvalidConfig, "envelope needs at least 8 samples");
  spectral::MagnitudeSpectrum<T> spec(frame.size(), kEnvelopeFft, kEnvelopeWindow);
  std::vector<T> mag(spec.bins()), env(spec.bins());
  spec.forward(frame.data(), mag.data());
  smooth3(mag.data(), mag.size(), env.data());
  return env;
}

namespace detail {

template <class T, class W>
T octave_sum(const T* env, std::size_t lo, std::size_t hi, const W* weight) {
  T acc = 0;
  for (std::size_t k = lo; k < hi; ++k) acc += static_cast<T>(weight[k]) * env[k];
  return acc;
}

}  // namespace detail

// Weighted average of envelope over octave j (1-based, j in 1..5); octaves
// holding no bins return 0.
template <class T>
T centroid_magnitude(std::span<const T> envelope, std::size_t j, const OctaveBins& ob) {
  require(j >= 1 && j <= kOctaves, Errc::kInvalidOctave, [&] { return "octave " + std::to_string(j); });
  require(envelope.size() >= ob.n_fft / 2 + 1, Errc::kShapeMismatch, "envelope shorter than grid");
  return detail::octave_sum(envelope.data(), ob.lo[j - 1], ob.hi[j - 1], ob.weight.data());
}

template <class T>
T centroid_magnitude(std::span<const T> envelope, std::size_t j) {
  return centroid_magnitude(envelope, j, OctaveBins::make());
}

struct FrameFeatures {
  std::size_t channels = 0;
  std::vector<double> energies;  // channels, log(E + 1e-6)
  std::vector<double> cm;        // channels x 5, row major
  std::array<double, kOctaves + 1> octave_edges_hz = kOctaveEdgesHz;

  // [energies..., cm row-major...]
  std::vector<double> flatten() const {
    std::vector<double> v(energies);
    v.insert(v.end(), cm.begin(), cm.end());
    return v;
  }
};

// Reusable per-thread feature computation for C x F subband frames.
template <class T>
class FeatureExtractor {
 public:
  explicit FeatureExtractor(std::size_t frame_len, double fs = kTargetRate)
      : spec_(frame_len, kEnvelopeFft, kEnvelopeWindow),
        octaves_(OctaveBins::make(kEnvelopeFft, fs)),
        weight_(octaves_.weight.begin(), octaves_.weight.end()),
        mag_(spec_.bins()),
        env_(spec_.bins()) {}

  FrameFeatures compute(std::span<const T> frame, std::size_t channels) {
    const std::size_t F = spec_.frame_len();
    require(frame.size() == channels * F, Errc::kShapeMismatch, "frame block size");
    FrameFeatures out;
    out.channels = channels;
    out.energies.resize(channels);
    out.cm.resize(channels * kOctaves);
    for (std::size_t c = 0; c < channels; ++c) {
      const T* x = frame.data() + c * F;
      double e = 0.0;
      for (std::size_t f = 0; f < F; ++f) e += static_cast<double>(x[f]) * x[f];
      out.energies[c] = std::log(e / F + kLogEnergyFloor);
      spec_.forward(x, mag_.data());
      smooth3(mag_.data(), mag_.size(), env_.data());
      for (std::size_t j = 0; j < kOctaves; ++j) {
        out.cm[c * kOctaves + j] =
            detail::octave_sum(env_.data(), octaves_.lo[j], octaves_.hi[j], weight_.data());
      }
    }
    return out;
  }

 private:
  spectral::MagnitudeSpectrum<T> spec_;
  OctaveBins octaves_;
  std::vector<T> weight_, mag_, env_;
};

template <class T>
FrameFeatures frame_features(std::span<const T> frame, std::size_t channels, std::size_t frame_len) {
  FeatureExtractor<T> fx(frame_len);
  return fx.compute(frame, channels);
}

// Feature file: "ADFT", u32 version, u32 channels, u32 frames, u32 octaves,
// then one row of float32 per frame laid out as FrameFeatures::flatten().
inline constexpr std::uint32_t kFeatureFileVersion = 1;

inline std::vector<std::uint8_t> encode_features(const std::vector<FrameFeatures>& frames) {
  std::vector<std::uint8_t> out;
  const std::uint32_t channels = frames.empty() ? 0 : static_cast<std::uint32_t>(frames.front().channels);
  out.insert(out.end(), {'A', 'D', 'F', 'T'});
  detail::put_u32(out, kFeatureFileVersion);
  detail::put_u32(out, channels);
  detail::put_u32(out, static_cast<std::uint32_t>(frames.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(kOctaves));
  for (const auto& fr : frames) {
    require(fr.channels == channels, Errc::kShapeMismatch, "ragged feature frames");
    for (double v : fr.flatten()) detail::put_u32(out, detail::bits_from_float(static_cast<float>(v)));
  }
  return out;
}

inline std::vector<FrameFeatures> decode_features(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 20 && std::memcmp(bytes.data(), "ADFT", 4) == 0, Errc::kMalformedHeader,
          "not an ADFT feature file");
  require(detail::read_u32(bytes, 4) == kFeatureFileVersion, Errc::kMalformedHeader,
          "unsupported feature file version");
  const std::size_t channels = detail::read_u32(bytes, 8);
  const std::size_t frames = detail::read_u32(bytes, 12);
  require(detail::read_u32(bytes, 16) == kOctaves, Errc::kMalformedHeader, "octave count != 5");
  const std::size_t row = channels * kFeaturesPerChannel;
  require(bytes.size() == 20 + 4 * row * frames, Errc::kMalformedHeader, "payload size mismatch");
  std::vector<FrameFeatures> out(frames);
  std::size_t at = 20;
  for (auto& fr : out) {
    fr.channels = channels;
    fr.energies.resize(channels);
    fr.cm.resize(channels * kOctaves);
    for (auto& v : fr.energies) v = detail::float_from_bits(detail::read_u32(bytes, (at += 4) - 4));
    for (auto& v : fr.cm) v = detail::float_from_bits(detail::read_u32(bytes, (at += 4) - 4));
  }
  return out;
}

inline void write_features_csv(std::ostream& os, const std::vector<FrameFeatures>& frames) {
  os << "frame_index,channel,energy";
  for (std::size_t j = 1; j <= kOctaves; ++j) os << ",cm" << j;
  os << '\n';
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& fr = frames[t];
    for (std::size_t c = 0; c < fr.channels; ++c) {
      os << t << ',' << c << ',' << fr.energies[c];
      for (std::size_t j = 0; j < kOctaves; ++j) os << ',' << fr.cm[c * kOctaves + j];
      os << '\n';
    }
  }
}

}  // namespace adafe
