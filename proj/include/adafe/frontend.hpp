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

// The adaptive front-end frame loop.
//
// Per frame t, with Q_t fixed before the frame is seen:
//   S_t = diff_k(fixed_bank * x_t)           (or x_t when the fixed layer is off)
//   C_t = adaptive_bank(Q_t) * S_t
//   Q^E_t  = lda(energy_db(S_t))              (zero / q_init when LDA is off)
//   Q^FM_t = afc(FM(C_t) and/or energy_db(C_t))
//   Q_{t+1} = clamp(Q^E_t + Q^FM_t, q_min, q_max)
// so Q_t depends only on frames before t.
//
// Two implementations share this file: Frontend<T>, a direct streaming path
// for inference and dumps, and TapeFrontend<T>, which records the same
// computation for a batch of utterances on a gradient tape.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adafe/audio_io.hpp"
#include "adafe/error.hpp"
#include "adafe/features.hpp"
#include "adafe/gabor_bank.hpp"
#include "adafe/grad/frontend_ops.hpp"
#include "adafe/grad/ops.hpp"
#include "adafe/grad/params.hpp"
#include "adafe/kernels.hpp"
#include "adafe/rng.hpp"
#include "adafe/spectral.hpp"

namespace adafe {

enum class AfcInput { kFm, kEnergy, kEnergyFm };

inline std::string_view afc_input_name(AfcInput k) {
  switch (k) {
    case AfcInput::kFm: return "fm";
    case AfcInput::kEnergy: return "energy";
    case AfcInput::kEnergyFm: return "energy_fm";
  }
  return "fm";
}

inline AfcInput parse_afc_input(std::string_view s) {
  if (s == "fm") return AfcInput::kFm;
  if (s == "energy") return AfcInput::kEnergy;
  if (s == "energy_fm") return AfcInput::kEnergyFm;
  fail(Errc::kInvalidConfig, "afc_input must be fm, energy or energy_fm, got " + std::string(s));
}

inline constexpr double kEnergyDbFloor = 1e-12;

struct FrontendConfig {
  std::size_t n_filters = 40;
  std::size_t diff_order = 1;
  std::size_t filter_len = 150;
  double frame_len_ms = 11.0;
  int sample_rate = kTargetRate;
  double f_lo = 60.0;
  double f_hi = 7800.0;
  double fixed_q = 4.0;
  double q_min = 0.5;
  double q_max = 8.0;
  double q_init = 2.0;
  bool lda_enabled = true;
  bool fixed_layer_enabled = true;
  bool afc_enabled = true;
  AfcInput afc_input = AfcInput::kFm;
  std::size_t controller_width = 0;  // 0 selects the adaptive channel count
  double lda_e_lo = -80.0;
  double lda_e_hi = -20.0;
  double lda_q_min = 0.6;
  double lda_q_max = 4.8;
  bool grad_through_synthesis = true;

  std::size_t adaptive_channels() const {
    return fixed_layer_enabled ? n_filters - diff_order : n_filters;
  }
  std::size_t output_channels() const { return n_filters - diff_order; }
  std::size_t afc_input_width() const {
    return afc_input == AfcInput::kEnergyFm ? 2 * adaptive_channels() : adaptive_channels();
  }
  std::size_t hidden_width() const {
    return controller_width == 0 ? adaptive_channels() : controller_width;
  }
  std::size_t frame_len() const { return frame_length_samples(frame_len_ms, sample_rate); }
  double afc_alpha() const { return (q_max - q_min) / 4.0; }

  grad::LdaKnees lda_knees() const { return {lda_e_lo, lda_e_hi, lda_q_min, lda_q_max}; }

  FilterbankLayout fixed_layout() const {
    return FilterbankLayout::linear(n_filters, f_lo, f_hi, sample_rate, Normalization::kPeakUnity);
  }
  // Centers of the channels the adaptive layer filters.
  std::vector<double> adaptive_centers() const {
    const auto c = fixed_layout().centers;
    return fixed_layer_enabled ? diff_centers(c, diff_order) : c;
  }
  std::vector<double> output_centers() const { return diff_centers(fixed_layout().centers, diff_order); }

  void validate() const {
    require(n_filters >= 1, Errc::kInvalidConfig, "n_filters must be positive");
    require(diff_order < n_filters, Errc::kOrderTooHigh, "diff_order must be below n_filters");
    require(filter_len >= 3, Errc::kInvalidConfig, "filter_len must be at least 3");
    require(frame_len_ms > 0.0 && frame_len() >= 8, Errc::kInvalidConfig, "frames need at least 8 samples");
    require(sample_rate == kTargetRate, Errc::kInvalidConfig, "the front-end runs at 16 kHz");
    require(q_min >= 0.5, Errc::kInvalidConfig, "q_min must be at least 0.5");
    require(q_min < q_init && q_init < q_max, Errc::kInvalidConfig, "need q_min < q_init < q_max");
    require(fixed_q >= 0.5, Errc::kInvalidConfig, "fixed_q must be at least 0.5");
    require(lda_e_lo < lda_e_hi, Errc::kInvalidConfig, "lda_e_lo must be below lda_e_hi");
    require(lda_q_min <= lda_q_max, Errc::kInvalidConfig, "lda_q_min must not exceed lda_q_max");
    require(hidden_width() == adaptive_channels(), Errc::kInvalidConfig,
            "controller_width must equal the adaptive channel count (diagonal output layer)");
    fixed_layout();
  }
};

// ---- per-frame building blocks (direct path) ----

// Mean-square energy per channel of a C x F block.
template <class T>
std::vector<double> subband_energy(std::span<const T> block, std::size_t channels) {
  require(channels > 0 && block.size() % channels == 0, Errc::kShapeMismatch, "subband block");
  const std::size_t F = block.size() / channels;
  std::vector<double> e(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (std::size_t f = 0; f < F; ++f) acc += static_cast<double>(block[c * F + f]) * block[c * F + f];
    e[c] = acc / static_cast<double>(F);
  }
  return e;
}

inline double to_db(double energy) { return 10.0 * std::log10(energy + kEnergyDbFloor); }

inline std::vector<double> to_db(std::span<const double> e) {
  std::vector<double> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = to_db(e[i]);
  return out;
}

inline std::vector<double> lda_q(std::span<const double> energy_db, const FrontendConfig& cfg) {
  const auto knees = cfg.lda_knees();
  std::vector<double> q(energy_db.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = knees(energy_db[i]);
  return q;
}

// Spectral-centroid deviation of each channel from its center, over fs / 2.
template <class T>
class FmAnalyzer {
 public:
  FmAnalyzer(std::size_t frame_len, double fs = kTargetRate)
      : fs_(fs),
        spec_(frame_len, std::max<std::size_t>(grad::kFmFft, frame_len + frame_len % 2),
              spectral::Window::kHann),
        freq_(spec_.bins()),
        mag_(spec_.bins()) {
    for (std::size_t k = 0; k < freq_.size(); ++k) freq_[k] = static_cast<T>(bin_hz(k, spec_.n_fft(), fs));
  }

  std::vector<double> compute(std::span<const T> block, std::span<const double> centers) {
    const std::size_t F = spec_.frame_len();
    require(block.size() == centers.size() * F, Errc::kShapeMismatch, "fm block size");
    std::vector<double> fm(centers.size());
    for (std::size_t c = 0; c < centers.size(); ++c) {
      spec_.forward(block.data() + c * F, mag_.data());
      T num = 0, den = 0;
      for (std::size_t k = 0; k < mag_.size(); ++k) {
        num += freq_[k] * mag_[k];
        den += mag_[k];
      }
      fm[c] = den > std::numeric_limits<T>::min()
                  ? (static_cast<double>(num / den) - centers[c]) / (fs_ / 2.0)
                  : 0.0;
    }
    return fm;
  }

 private:
  double fs_;
  spectral::MagnitudeSpectrum<T> spec_;
  std::vector<T> freq_, mag_;
};

template <class T>
std::vector<double> fm_component(std::span<const T> block, std::span<const double> centers) {
  require(!centers.empty(), Errc::kShapeMismatch, "fm_component needs channel centers");
  FmAnalyzer<T> fm(block.size() / centers.size());
  return fm.compute(block, centers);
}

struct ControllerInput {
  AfcInput kind = AfcInput::kFm;
  std::vector<double> values;  // A entries, or 2A as [energy_db..., fm...]
};

inline ControllerInput make_controller_input(AfcInput kind, std::span<const double> energy_db,
                                             std::span<const double> fm) {
  ControllerInput in;
  in.kind = kind;
  if (kind != AfcInput::kFm) in.values.insert(in.values.end(), energy_db.begin(), energy_db.end());
  if (kind != AfcInput::kEnergy) in.values.insert(in.values.end(), fm.begin(), fm.end());
  return in;
}

// ---- controller ----

// Creates afc.* parameters: batch norm over the D inputs, dense FC1 D -> A,
// diagonal FC2 (afc.fc2.diag, afc.fc2.bias).
template <class T>
void init_afc_params(grad::ParamStore<T>& store, const FrontendConfig& cfg, std::uint64_t seed) {
  const std::size_t D = cfg.afc_input_width(), A = cfg.adaptive_channels();
  Rng rng(mix_seed({seed, 0xafc}));
  const double bound = 1.0 / std::sqrt(static_cast<double>(D));
  std::vector<T> w(D * A);
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  store.add("afc.bn.gamma", {D}, std::vector<T>(D, T(1)));
  store.add("afc.bn.beta", {D}, std::vector<T>(D, T(0)));
  store.add("afc.bn.running_mean", {D}, std::vector<T>(D, T(0)), false);
  store.add("afc.bn.running_var", {D}, std::vector<T>(D, T(1)), false);
  store.add("afc.fc1.weight", {D, A}, std::move(w));
  store.add("afc.fc1.bias", {A}, std::vector<T>(A, T(0)));
  store.add("afc.fc2.diag", {A}, std::vector<T>(A, T(0.1)));
  store.add("afc.fc2.bias", {A}, std::vector<T>(A, T(0)));
}

template <class T>
struct AfcVars {
  grad::Var<T> gamma, beta, w1, b1, diag, bias;
  grad::BnRunning<T> running;
};

// Picks the afc.* leaves out of vars (bound from store in store order).
template <class T>
AfcVars<T> afc_vars(grad::ParamStore<T>& store, const std::vector<grad::Var<T>>& vars) {
  auto v = [&](const char* n) { return vars.at(store.find(n)); };
  require(store.contains("afc.fc1.weight"), Errc::kInvalidConfig, "store has no controller");
  return {v("afc.bn.gamma"),  v("afc.bn.beta"),     v("afc.fc1.weight"),
          v("afc.fc1.bias"),  v("afc.fc2.diag"),    v("afc.fc2.bias"),
          {std::span<T>(store.at("afc.bn.running_mean").value),
           std::span<T>(store.at("afc.bn.running_var").value)}};
}

// Q^FM = alpha * tanh(diag * relu(FC1(BN(x))) + bias) + alpha, x [B, D].
template <class T>
grad::Var<T> afc_graph(grad::Var<T> x, AfcVars<T>& p, grad::Mode mode, double alpha) {
  using namespace grad;
  auto xn = batchnorm(x, p.gamma, p.beta, p.running, mode);
  auto h = relu(add(matmul(xn, p.w1), p.b1));
  auto z = add(mul(h, p.diag), p.bias);
  return affine(tanh(z), static_cast<T>(alpha), static_cast<T>(alpha));
}

// Direct controller evaluation for a batch of inputs (row-major B x D).
// Train mode normalises with the batch statistics and updates the running
// statistics held in store.
template <class T>
std::vector<T> afc_forward(std::span<const T> inputs, std::size_t batch, grad::ParamStore<T>& store,
                           const FrontendConfig& cfg, grad::Mode mode) {
  const std::size_t D = cfg.afc_input_width();
  require(batch >= 1 && inputs.size() == batch * D, Errc::kShapeMismatch,
          [&] { return "controller input has " + std::to_string(inputs.size()) + " values, expected " +
              std::to_string(batch) + " x " + std::to_string(D); });
  grad::Tape<T> tape;
  auto vars = store.bind(tape);
  auto p = afc_vars(store, vars);
  auto x = tape.constant({batch, D}, std::vector<T>(inputs.begin(), inputs.end()));
  return afc_graph(x, p, mode, cfg.afc_alpha()).value();
}

template <class T>
std::vector<double> afc_forward(const ControllerInput& in, grad::ParamStore<T>& store,
                                const FrontendConfig& cfg) {
  require(in.kind == cfg.afc_input, Errc::kShapeMismatch, "controller input kind differs from config");
  std::vector<T> x(in.values.begin(), in.values.end());
  const auto y = afc_forward<T>(x, 1, store, cfg, grad::Mode::kInfer);
  return {y.begin(), y.end()};
}

// ---- streaming inference path ----

struct AdaptState {
  std::vector<double> q_current;  // Q used for the next frame
  std::vector<double> q_e_prev;
  std::vector<double> q_fm_prev;
  std::size_t frame_index = 0;
};

template <class T>
struct FrameOutput {
  std::vector<T> subbands;          // output_channels x F (after any differencing)
  std::vector<double> q_used;       // Q that filtered this frame
  std::vector<double> energy_db;    // level-rule input energy per adaptive channel
  std::vector<double> q_e, q_fm;    // contributions that set the next frame's Q
  FrameFeatures features;
};

// T x A matrix of the Q that filtered each frame, alongside the level-rule
// input energy of that frame.
struct QTrace {
  std::size_t frames = 0;
  std::size_t channels = 0;
  std::vector<double> q;          // frames x channels
  std::vector<double> energy_db;  // frames x channels

  double q_at(std::size_t t, std::size_t c) const { return q[t * channels + c]; }
  double energy_at(std::size_t t, std::size_t c) const { return energy_db[t * channels + c]; }

  void write_csv(std::ostream& os) const {
    os << "frame_index,channel,q_value,energy_db\n";
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t c = 0; c < channels; ++c)
        os << t << ',' << c << ',' << q_at(t, c) << ',' << energy_at(t, c) << '\n';
  }
};

template <class T>
struct UtteranceResult {
  SubbandTensor<T> subbands;
  QTrace trace;
  std::vector<FrameFeatures> features;
};

inline std::vector<double> fixed_q_vector(const FrontendConfig& cfg) {
  return std::vector<double>(cfg.n_filters, cfg.fixed_q);
}

template <class T = float>
class Frontend {
 public:
  // afc may be null only when the controller is disabled.
  Frontend(const FrontendConfig& cfg, const grad::ParamStore<T>* afc)
      : cfg_((cfg.validate(), cfg)),
        F_(cfg.frame_len()),
        fixed_(build_bank(cfg.fixed_layout(), fixed_q_vector(cfg), cfg.filter_len), F_),
        synth_(cfg.adaptive_centers(), cfg.filter_len, cfg.sample_rate),
        conv_(F_, cfg.filter_len),
        fm_(F_, cfg.sample_rate),
        features_(F_, cfg.sample_rate),
        lda_(cfg.lda_knees()) {
    require(!cfg.afc_enabled || afc != nullptr, Errc::kInvalidConfig, "controller enabled without parameters");
    if (afc) {
      for (const auto& p : *afc)
        if (p.name.starts_with("afc.")) afc_.add(p.name, p.shape, p.value, p.trainable);
    }
  }

  const FrontendConfig& config() const { return cfg_; }
  std::size_t frame_len() const { return F_; }

  // Overrides the level rule (default: the configured knees).
  void set_lda(std::function<double(double)> fn) { lda_ = std::move(fn); }

  AdaptState initial_state() const {
    const std::size_t A = cfg_.adaptive_channels();
    return {std::vector<double>(A, cfg_.q_init), std::vector<double>(A, 0.0),
            std::vector<double>(A, 0.0), 0};
  }

  FrameOutput<T> step_frame(std::span<const float> frame, AdaptState& state) {
    require(frame.size() == F_, Errc::kShapeMismatch, "frame length");
    const std::size_t A = cfg_.adaptive_channels(), O = cfg_.output_channels(), P = cfg_.filter_len;
    FrameOutput<T> out;
    out.q_used = state.q_current;

    // Input to the adaptive layer: A x F, or one shared row without the
    // fixed layer.
    std::vector<T> input;
    if (cfg_.fixed_layer_enabled) {
      std::vector<T> y(cfg_.n_filters * F_);
      fixed_.apply(frame, y.data());
      input.resize(A * F_);
      spatial_diff_frame(y.data(), cfg_.n_filters, F_, cfg_.diff_order, input.data());
    } else {
      input.assign(frame.begin(), frame.end());
    }

    std::vector<T> c(A * F_), taps(P);
    if (!cfg_.fixed_layer_enabled) conv_.load(input.data());
    for (std::size_t a = 0; a < A; ++a) {
      if (cfg_.fixed_layer_enabled) conv_.load(input.data() + a * F_);
      synth_.synth(a, static_cast<T>(state.q_current[a]), taps.data());
      conv_.forward(taps.data(), c.data() + a * F_);
    }

    const auto c_energy_db = to_db(subband_energy<T>(c, A));
    out.energy_db = cfg_.fixed_layer_enabled ? to_db(subband_energy<T>(input, A)) : c_energy_db;

    std::vector<double> base(A, cfg_.q_init);
    out.q_e.assign(A, 0.0);
    if (cfg_.lda_enabled) {
      for (std::size_t a = 0; a < A; ++a) out.q_e[a] = lda_(out.energy_db[a]);
      base = out.q_e;
    }
    out.q_fm.assign(A, 0.0);
    if (cfg_.afc_enabled) {
      std::vector<double> fm;
      if (cfg_.afc_input != AfcInput::kEnergy) fm = fm_.compute(c, synth_.centers());
      out.q_fm = afc_forward(make_controller_input(cfg_.afc_input, c_energy_db, fm), afc_, cfg_);
    }
    std::vector<double> q_next(A);
    for (std::size_t a = 0; a < A; ++a) {
      // The sum is formed in T so both paths round identically.
      const T s = static_cast<T>(base[a]) + static_cast<T>(out.q_fm[a]);
      q_next[a] = std::clamp(static_cast<double>(s), cfg_.q_min, cfg_.q_max);
    }

    if (cfg_.fixed_layer_enabled) {
      out.subbands = std::move(c);
    } else {
      out.subbands.resize(O * F_);
      spatial_diff_frame(c.data(), A, F_, cfg_.diff_order, out.subbands.data());
    }
    out.features = features_.compute(out.subbands, O);

    state.q_e_prev = out.q_e;
    state.q_fm_prev = out.q_fm;
    state.q_current = std::move(q_next);
    ++state.frame_index;
    return out;
  }

  UtteranceResult<T> run_utterance(const Waveform& w) {
    const FrameSequence frames = frame_signal(ensure_16k(w), cfg_.frame_len_ms);
    return run_frames(frames);
  }

  UtteranceResult<T> run_frames(const FrameSequence& frames) {
    const std::size_t A = cfg_.adaptive_channels(), O = cfg_.output_channels();
    UtteranceResult<T> r;
    r.subbands = SubbandTensor<T>(frames.num_frames, O, F_, cfg_.output_centers());
    r.trace.frames = frames.num_frames;
    r.trace.channels = A;
    r.trace.q.reserve(frames.num_frames * A);
    r.trace.energy_db.reserve(frames.num_frames * A);
    AdaptState st = initial_state();
    for (std::size_t t = 0; t < frames.num_frames; ++t) {
      auto fo = step_frame(frames.frame(t), st);
      std::copy(fo.subbands.begin(), fo.subbands.end(), r.subbands.frame(t).begin());
      r.trace.q.insert(r.trace.q.end(), fo.q_used.begin(), fo.q_used.end());
      r.trace.energy_db.insert(r.trace.energy_db.end(), fo.energy_db.begin(), fo.energy_db.end());
      r.features.push_back(std::move(fo.features));
    }
    return r;
  }

 private:
  FrontendConfig cfg_;
  std::size_t F_;
  FrameFilter<T> fixed_;
  kernels::GaborSynth<T> synth_;
  kernels::SameConv<T> conv_;
  FmAnalyzer<T> fm_;
  FeatureExtractor<T> features_;
  grad::ParamStore<T> afc_;
  std::function<double(double)> lda_;
};

// Pooled utterance descriptor fed to the classifier: per channel the frame
// mean of log energies, then log(frame mean of each CM + 1e-6); laid out as
// FrameFeatures::flatten().
inline std::vector<double> pool_features(const std::vector<FrameFeatures>& frames) {
  require(!frames.empty(), Errc::kEmptyAudio, "no frames to pool");
  const std::size_t C = frames.front().channels;
  std::vector<double> e(C, 0.0), cm(C * kOctaves, 0.0);
  for (const auto& fr : frames) {
    for (std::size_t i = 0; i < C; ++i) e[i] += fr.energies[i];
    for (std::size_t i = 0; i < C * kOctaves; ++i) cm[i] += fr.cm[i];
  }
  const double n = static_cast<double>(frames.size());
  std::vector<double> out;
  out.reserve(C * kFeaturesPerChannel);
  for (double v : e) out.push_back(v / n);
  for (double v : cm) out.push_back(std::log(v / n + kLogEnergyFloor));
  return out;
}

// ---- recorded (differentiable) path ----

template <class T>
struct TapeStep {
  grad::Var<T> subbands;    // [B, O, F]
  grad::Var<T> log_energy;  // [B, O]
  grad::Var<T> cm;          // [B, O, 5]
  grad::Var<T> q_next;      // [B, A]
  grad::Var<T> energy_db;   // [B, A] level-rule input
};

template <class T>
class TapeFrontend {
 public:
  explicit TapeFrontend(const FrontendConfig& cfg)
      : cfg_((cfg.validate(), cfg)),
        F_(cfg.frame_len()),
        fixed_(build_bank(cfg.fixed_layout(), fixed_q_vector(cfg), cfg.filter_len), F_),
        synth_(cfg.adaptive_centers(), cfg.filter_len, cfg.sample_rate) {}

  const FrontendConfig& config() const { return cfg_; }
  std::size_t frame_len() const { return F_; }
  const kernels::GaborSynth<T>& synth() const { return synth_; }

  // Constant adaptive-layer input for one frame of each utterance:
  // [B, A, F] after the fixed layer, or [B, 1, F] raw.
  grad::Var<T> frame_input(grad::Tape<T>& tape, const std::vector<std::span<const float>>& frames) {
    const std::size_t B = frames.size(), A = cfg_.adaptive_channels();
    if (!cfg_.fixed_layer_enabled) {
      std::vector<T> x(B * F_);
      for (std::size_t b = 0; b < B; ++b) std::copy(frames[b].begin(), frames[b].end(), x.begin() + b * F_);
      return tape.constant({B, 1, F_}, std::move(x));
    }
    std::vector<T> x(B * A * F_), y(cfg_.n_filters * F_);
    for (std::size_t b = 0; b < B; ++b) {
      fixed_.apply(frames[b], y.data());
      spatial_diff_frame(y.data(), cfg_.n_filters, F_, cfg_.diff_order, x.data() + b * A * F_);
    }
    return tape.constant({B, A, F_}, std::move(x));
  }

  grad::Var<T> initial_q(grad::Tape<T>& tape, std::size_t batch) const {
    return tape.constant({batch, cfg_.adaptive_channels()},
                         std::vector<T>(batch * cfg_.adaptive_channels(), static_cast<T>(cfg_.q_init)));
  }

  // afc may be null when the controller is disabled.
  TapeStep<T> step(grad::Tape<T>& tape, grad::Var<T> input, grad::Var<T> q, AfcVars<T>* afc,
                   grad::Mode mode) const {
    using namespace grad;
    const std::size_t B = input.shape()[0], A = cfg_.adaptive_channels();
    auto q_syn = cfg_.grad_through_synthesis ? q : detach(q);
    auto taps = gabor_taps(q_syn, synth_);
    auto c = conv_same(input, taps);
    const T db_scale = static_cast<T>(10.0 / std::numbers::ln10);
    auto db = [&](Var<T> power) {
      return affine(log(affine(power, T(1), static_cast<T>(kEnergyDbFloor))), db_scale, T(0));
    };
    auto c_power = mean_square(c);
    auto c_db = db(c_power);
    auto lda_db = cfg_.fixed_layer_enabled ? db(mean_square(input)) : c_db;
    Var<T> base = cfg_.lda_enabled
                      ? lda(lda_db, cfg_.lda_knees())
                      : tape.constant({B, A}, std::vector<T>(B * A, static_cast<T>(cfg_.q_init)));
    Var<T> sum = base;
    if (cfg_.afc_enabled) {
      require(afc != nullptr, Errc::kInvalidConfig, "controller enabled without parameters");
      Var<T> in;
      switch (cfg_.afc_input) {
        case AfcInput::kFm: in = centroid_deviation(c, synth_.centers(), cfg_.sample_rate); break;
        case AfcInput::kEnergy: in = c_db; break;
        case AfcInput::kEnergyFm:
          in = concat_last(c_db, centroid_deviation(c, synth_.centers(), cfg_.sample_rate));
          break;
      }
      sum = add(base, afc_graph(in, *afc, mode, cfg_.afc_alpha()));
    }
    TapeStep<T> s;
    s.q_next = clamp_straight_through(sum, static_cast<T>(cfg_.q_min), static_cast<T>(cfg_.q_max));
    s.energy_db = lda_db;
    s.subbands = cfg_.fixed_layer_enabled ? c : spatial_diff(c, cfg_.diff_order);
    s.log_energy = log(affine(cfg_.fixed_layer_enabled ? c_power : mean_square(s.subbands), T(1),
                              static_cast<T>(kLogEnergyFloor)));
    s.cm = octave_cm(s.subbands, cfg_.sample_rate);
    return s;
  }

 private:
  FrontendConfig cfg_;
  std::size_t F_;
  FrameFilter<T> fixed_;
  kernels::GaborSynth<T> synth_;
};

}  // namespace adafe
