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

// Zero-padded real DFT magnitudes and their adjoint, backed by FFTW.

#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include "adafe/error.hpp"

namespace adafe::spectral {

namespace detail {

template <class T>
struct Fftw;

template <>
struct Fftw<double> {
  using plan = fftw_plan;
  using complex = fftw_complex;
  static double* alloc_real(std::size_t n) { return fftw_alloc_real(n); }
  static complex* alloc_complex(std::size_t n) { return fftw_alloc_complex(n); }
  static void free(void* p) { fftw_free(p); }
  static plan r2c(int n, double* in, complex* out) {
    return fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  static plan c2r(int n, complex* in, double* out) {
    return fftw_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE);
  }
  static void exec_r2c(plan p, double* in, complex* out) { fftw_execute_dft_r2c(p, in, out); }
  static void exec_c2r(plan p, complex* in, double* out) { fftw_execute_dft_c2r(p, in, out); }
};

template <>
struct Fftw<float> {
  using plan = fftwf_plan;
  using complex = fftwf_complex;
  static float* alloc_real(std::size_t n) { return fftwf_alloc_real(n); }
  static complex* alloc_complex(std::size_t n) { return fftwf_alloc_complex(n); }
  static void free(void* p) { fftwf_free(p); }
  static plan r2c(int n, float* in, complex* out) {
    return fftwf_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  static plan c2r(int n, complex* in, float* out) {
    return fftwf_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE);
  }
  static void exec_r2c(plan p, float* in, complex* out) { fftwf_execute_dft_r2c(p, in, out); }
  static void exec_c2r(plan p, complex* in, float* out) { fftwf_execute_dft_c2r(p, in, out); }
};

// FFTW's planner is not thread safe; every plan goes through this lock.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

template <class T>
struct PlanPair {
  typename Fftw<T>::plan forward;
  typename Fftw<T>::plan inverse;
};

template <class T>
const PlanPair<T>& plans_for(std::size_t n) {
  static std::map<std::size_t, PlanPair<T>> cache;
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto it = cache.find(n);
  if (it == cache.end()) {
    using F = Fftw<T>;
    T* r = F::alloc_real(n);
    auto* c = F::alloc_complex(n / 2 + 1);
    PlanPair<T> pp{F::r2c(static_cast<int>(n), r, c), F::c2r(static_cast<int>(n), c, r)};
    F::free(r);
    F::free(c);
    it = cache.emplace(n, pp).first;
  }
  return it->second;
}

}  // namespace detail

enum class Window { kRectangular, kHann };

// Symmetric Hann over the frame length.
inline std::vector<double> make_window(Window kind, std::size_t len) {
  std::vector<double> w(len, 1.0);
  if (kind == Window::kHann && len > 1) {
    for (std::size_t n = 0; n < len; ++n) {
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / (len - 1));
    }
  }
  return w;
}

// Magnitude of the n_fft-point DFT of a (windowed, zero-padded) frame, with
// the adjoint needed for reverse-mode differentiation. Instances own aligned
// FFTW buffers; use one per thread.
template <class T>
class MagnitudeSpectrum {
  using F = detail::Fftw<T>;

 public:
  MagnitudeSpectrum(std::size_t frame_len, std::size_t n_fft, Window window)
      : frame_len_(frame_len), n_fft_(n_fft), window_kind_(window),
        window_(to_type(make_window(window, frame_len))),
        plans_(&detail::plans_for<T>(n_fft)) {
    require(n_fft >= frame_len && (n_fft % 2) == 0, Errc::kInvalidConfig,
            "FFT length must be even and cover the frame");
    real_ = F::alloc_real(n_fft);
    spec_ = F::alloc_complex(n_fft / 2 + 1);
  }
  MagnitudeSpectrum(const MagnitudeSpectrum& other)
      : MagnitudeSpectrum(other.frame_len_, other.n_fft_, other.window_kind_) {}
  MagnitudeSpectrum& operator=(const MagnitudeSpectrum&) = delete;
  ~MagnitudeSpectrum() {
    F::free(real_);
    F::free(spec_);
  }

  std::size_t bins() const { return n_fft_ / 2 + 1; }
  std::size_t n_fft() const { return n_fft_; }
  std::size_t frame_len() const { return frame_len_; }

  // Writes bins() magnitudes; when spectrum is non-null the complex DFT is
  // stored there as interleaved (re, im) pairs.
  void forward(const T* x, T* magnitude, T* spectrum = nullptr) {
    for (std::size_t n = 0; n < frame_len_; ++n) real_[n] = x[n] * window_[n];
    for (std::size_t n = frame_len_; n < n_fft_; ++n) real_[n] = T(0);
    F::exec_r2c(plans_->forward, real_, spec_);
    for (std::size_t k = 0; k < bins(); ++k) {
      const T re = spec_[k][0], im = spec_[k][1];
      magnitude[k] = std::sqrt(re * re + im * im);
      if (spectrum) {
        spectrum[2 * k] = re;
        spectrum[2 * k + 1] = im;
      }
    }
  }

  // Accumulates d(loss)/dx given d(loss)/d|X_k| and the stored spectrum:
  //   dL/dx_n = w_n * Re(sum_k g_k X_k / |X_k| e^{+i 2 pi k n / N}).
  // Bins with |X_k| == 0 contribute nothing.
  void backward(const T* spectrum, const T* g_magnitude, T* g_x) {
    const std::size_t nb = bins();
    T* c = &spec_[0][0];
    for (std::size_t k = 0; k < nb; ++k) {
      const T re = spectrum[2 * k], im = spectrum[2 * k + 1];
      const T mag2 = re * re + im * im;
      // c2r doubles interior bins (Hermitian extension); the edge bins are
      // fixed up below.
      const T s = mag2 > T(0) ? g_magnitude[k] / (T(2) * std::sqrt(mag2)) : T(0);
      c[2 * k] = s * re;
      c[2 * k + 1] = s * im;
    }
    // DC and Nyquist are not doubled and their imaginary parts are dropped.
    for (std::size_t k : {std::size_t{0}, nb - 1}) {
      c[2 * k] *= T(2);
      c[2 * k + 1] = T(0);
    }
    F::exec_c2r(plans_->inverse, spec_, real_);
    for (std::size_t n = 0; n < frame_len_; ++n) {
      g_x[n] += real_[n] * window_[n];
    }
  }

 private:
  static std::vector<T> to_type(const std::vector<double>& w) { return {w.begin(), w.end()}; }

  std::size_t frame_len_, n_fft_;
  Window window_kind_;
  std::vector<T> window_;
  const detail::PlanPair<T>* plans_;
  T* real_ = nullptr;
  typename F::complex* spec_ = nullptr;
};

}  // namespace adafe::spectral
