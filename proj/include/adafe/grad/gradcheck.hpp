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

// Central finite-difference checks of every differentiable op, plus the
// recorded front-end over one frame and over a short unrolled sequence.
// Everything runs in double; each case reduces its outputs to a scalar with
// a fixed random projection so every output element carries gradient.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adafe/frontend.hpp"
#include "adafe/grad/frontend_ops.hpp"
#include "adafe/grad/ops.hpp"
#include "adafe/grad/params.hpp"
#include "adafe/kernels.hpp"
#include "adafe/rng.hpp"

namespace adafe::grad {

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-4;

struct GradCase {
  using Builder = std::function<std::vector<Var<double>>(Tape<double>&, const std::vector<Var<double>>&)>;

  std::string name;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> values;
  std::vector<bool> wrt;  // inputs that are differentiated
  Builder build;
  std::size_t max_probes = 48;  // per input
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = kGradCheckStep;
  double tolerance = kGradCheckTolerance;
  std::uint64_t seed = 0;
  std::string only;  // run a single case by name when set
};

namespace detail {

class Projection {
 public:
  explicit Projection(std::uint64_t seed) : rng_(seed) {}

  // Sum over outputs of mean(y_i * w_i); w_i is drawn on first use.
  Var<double> loss(Tape<double>& tape, const std::vector<Var<double>>& outs) {
    if (weights_.size() < outs.size()) {
      for (std::size_t i = weights_.size(); i < outs.size(); ++i) {
        std::vector<double> w(outs[i].size());
        for (auto& v : w) v = rng_.uniform(-1.0, 1.0);
        weights_.push_back(std::move(w));
      }
    }
    // Recorded as its own op so a fault injected into any registered op
    // only shows up in the cases that use it.
    double total = 0.0;
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < outs.size(); ++i) {
      const auto& y = outs[i].value();
      for (std::size_t k = 0; k < y.size(); ++k) total += y[k] * weights_[i][k] / static_cast<double>(y.size());
      ids.push_back(outs[i].id);
    }
    bool rg = false;
    for (const auto& o : outs) rg = rg || o.requires_grad();
    const auto* w = &weights_;
    return tape.push("gradcheck_projection", {1}, {total}, rg, [ids, w](Tape<double>& t, std::size_t self) {
      const double g = t.node(self).grad[0];
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!t.node(ids[i]).requires_grad) continue;
        auto& gy = t.grad_buffer(ids[i]);
        const double n = static_cast<double>(gy.size());
        for (std::size_t k = 0; k < gy.size(); ++k) gy[k] += g * (*w)[i][k] / n;
      }
    });
  }

 private:
  Rng rng_;
  std::vector<std::vector<double>> weights_;
};

inline double eval_loss(const GradCase& c, Projection& proj, const std::vector<std::vector<double>>& values,
                        std::vector<std::vector<double>>* grads) {
  Tape<double> tape;
  std::vector<Var<double>> in;
  for (std::size_t i = 0; i < values.size(); ++i)
    in.push_back(tape.leaf(c.shapes[i], values[i], c.wrt[i], c.name + ".in" + std::to_string(i)));
  auto loss = proj.loss(tape, c.build(tape, in));
  if (grads) {
    tape.backward(loss);
    grads->clear();
    for (const auto& v : in) grads->push_back(tape.grad(v));
  }
  return loss.value()[0];
}

inline std::vector<std::size_t> probe_indices(std::size_t n, std::size_t max_probes, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n <= max_probes) return idx;
  rng.shuffle(idx);
  idx.resize(max_probes);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline std::vector<double> uniform(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Magnitudes in [lo, hi] with random sign, keeping clear of zero.
inline std::vector<double> away_from_zero(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
  return v;
}

// Tones plus noise, one row per (utterance, channel), in float for the
// recorded front-end's frame input.
inline std::vector<float> test_frames(Rng& rng, std::size_t rows, std::size_t len, double fs) {
  std::vector<float> x(rows * len);
  for (std::size_t r = 0; r < rows; ++r) {
    const double f = rng.uniform(300.0, 5000.0), a = rng.uniform(0.02, 0.2), ph = rng.uniform(0.0, 6.28);
    for (std::size_t n = 0; n < len; ++n)
      x[r * len + n] = static_cast<float>(a * std::sin(2.0 * std::numbers::pi * f * n / fs + ph) +
                                          0.01 * rng.normal());
  }
  return x;
}

// Q leaf plus every trainable controller parameter, pushed through `frames`
// steps of the recorded front-end without truncation.
inline GradCase frontend_case(std::string name, std::size_t frames, std::uint64_t seed) {
  FrontendConfig cfg;
  cfg.q_init = 2.0;
  const std::size_t B = 3, A = cfg.adaptive_channels();
  auto fe = std::make_shared<TapeFrontend<double>>(cfg);
  auto store = std::make_shared<ParamStore<double>>();
  init_afc_params(*store, cfg, seed);
  // Spread the controller so its hidden units and gains are exercised.
  Rng rng(mix_seed({seed, 0xfe}));
  for (auto& p : *store) {
    if (!p.trainable) continue;
    if (p.name == "afc.fc2.diag") p.value = uniform(rng, p.value.size(), 0.2, 0.6);
    if (p.name == "afc.fc1.bias") p.value = uniform(rng, p.value.size(), 0.2, 0.5);
    if (p.name == "afc.bn.gamma") p.value = uniform(rng, p.value.size(), 0.5, 1.5);
  }
  auto raw = std::make_shared<std::vector<float>>(test_frames(rng, frames * B, fe->frame_len(), cfg.sample_rate));

  GradCase c;
  c.name = std::move(name);
  c.max_probes = 24;
  c.shapes.push_back({B, A});
  c.values.push_back(uniform(rng, B * A, 1.5, 3.0));
  c.wrt.push_back(true);
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < store->size(); ++i) {
    const auto& p = (*store)[i];
    if (!p.trainable) continue;
    slots.push_back(i);
    c.shapes.push_back(p.shape);
    c.values.push_back(p.value);
    c.wrt.push_back(true);
  }
  c.build = [fe, store, raw, slots, frames, B](Tape<double>& tape, const std::vector<Var<double>>& in) {
    std::vector<Var<double>> vars(store->size());
    for (std::size_t i = 0; i < store->size(); ++i)
      vars[i] = tape.constant((*store)[i].shape, (*store)[i].value);
    for (std::size_t s = 0; s < slots.size(); ++s) vars[slots[s]] = in[s + 1];
    auto afc = afc_vars(*store, vars);
    const std::size_t F = fe->frame_len();
    Var<double> q = in[0];
    std::vector<Var<double>> outs;
    for (std::size_t t = 0; t < frames; ++t) {
      std::vector<std::span<const float>> fr(B);
      for (std::size_t b = 0; b < B; ++b) fr[b] = std::span<const float>(raw->data() + (t * B + b) * F, F);
      auto step = fe->step(tape, fe->frame_input(tape, fr), q, &afc, Mode::kTrain);
      outs.push_back(step.log_energy);
      outs.push_back(step.cm);
      q = step.q_next;
    }
    outs.push_back(q);
    return outs;
  };
  return c;
}

}  // namespace detail

// Tape op names covered by gradcheck_cases(), one case each, followed by
// the two end-to-end front-end cases.
inline const std::vector<std::string>& registered_ops() {
  static const std::vector<std::string> ops = {
      "add",         "mul",     "affine",      "matmul",      "relu",      "tanh",
      "square",      "log",     "clamp_straight_through",     "mean",      "mean_square",
      "concat_last", "reshape", "batchnorm",   "softmax_cross_entropy",    "gabor_taps",
      "centroid_deviation",     "conv_same",   "spatial_diff", "octave_cm", "lda"};
  return ops;
}

inline constexpr const char* kFrontendCases[] = {"ada_fe_step", "ada_fe_unrolled"};

// Every registered case. Inputs are drawn away from the kinks of relu, the
// clamp and the level rule.
inline std::vector<GradCase> gradcheck_cases(std::uint64_t seed = 0) {
  using detail::away_from_zero;
  using detail::uniform;
  using V = std::vector<Var<double>>;
  Rng rng(mix_seed({seed, 0x9c}));
  std::vector<GradCase> cases;
  auto add_case = [&](std::string name, std::vector<Shape> shapes, std::vector<std::vector<double>> values,
                      std::vector<bool> wrt, GradCase::Builder build) {
    cases.push_back({std::move(name), std::move(shapes), std::move(values), std::move(wrt), std::move(build)});
  };

  add_case("add", {{3, 4}, {4}}, {uniform(rng, 12, -1, 1), uniform(rng, 4, -1, 1)}, {true, true},
           [](Tape<double>&, const V& in) { return V{add(in[0], in[1])}; });
  add_case("mul", {{3, 4}, {3, 4}}, {uniform(rng, 12, -1, 1), uniform(rng, 12, -1, 1)}, {true, true},
           [](Tape<double>&, const V& in) { return V{mul(in[0], in[1])}; });
  add_case("affine", {{5}}, {uniform(rng, 5, -2, 2)}, {true},
           [](Tape<double>&, const V& in) { return V{affine(in[0], 1.7, -0.3)}; });
  add_case("matmul", {{3, 4}, {4, 2}}, {uniform(rng, 12, -1, 1), uniform(rng, 8, -1, 1)}, {true, true},
           [](Tape<double>&, const V& in) { return V{matmul(in[0], in[1])}; });
  add_case("relu", {{10}}, {away_from_zero(rng, 10, 0.1, 1.0)}, {true},
           [](Tape<double>&, const V& in) { return V{relu(in[0])}; });
  add_case("tanh", {{8}}, {uniform(rng, 8, -2, 2)}, {true},
           [](Tape<double>&, const V& in) { return V{tanh(in[0])}; });
  add_case("square", {{8}}, {uniform(rng, 8, -2, 2)}, {true},
           [](Tape<double>&, const V& in) { return V{square(in[0])}; });
  add_case("log", {{8}}, {uniform(rng, 8, 0.2, 3.0)}, {true},
           [](Tape<double>&, const V& in) { return V{log(in[0])}; });
  {
    std::vector<double> x(12);
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = i % 3 == 0 ? rng.uniform(1.2, 2.0) : i % 3 == 1 ? rng.uniform(-0.8, 0.8) : rng.uniform(-2.0, -1.2);
    add_case("clamp_straight_through", {{12}}, {x}, {true},
             [](Tape<double>&, const V& in) { return V{clamp_straight_through(in[0], -1.0, 1.0)}; });
  }
  add_case("mean", {{2, 3, 4}}, {uniform(rng, 24, -1, 1)}, {true},
           [](Tape<double>&, const V& in) { return V{mean(in[0])}; });
  add_case("mean_square", {{2, 3, 5}}, {uniform(rng, 30, -1, 1)}, {true},
           [](Tape<double>&, const V& in) { return V{mean_square(in[0])}; });
  add_case("concat_last", {{2, 3}, {2, 4}}, {uniform(rng, 6, -1, 1), uniform(rng, 8, -1, 1)}, {true, true},
           [](Tape<double>&, const V& in) { return V{concat_last(in[0], in[1])}; });
  add_case("reshape", {{2, 6}}, {uniform(rng, 12, -1, 1)}, {true},
           [](Tape<double>&, const V& in) { return V{reshape(in[0], {3, 4})}; });
  {
    // Running mean/var for the train-mode call, then fixed ones for infer.
    auto stats = std::make_shared<std::vector<double>>(16, 1.0);
    for (std::size_t i = 0; i < 4; ++i) (*stats)[i] = 0.0;
    for (std::size_t i = 8; i < 16; ++i) (*stats)[i] = rng.uniform(0.5, 1.5);
    add_case("batchnorm", {{6, 4}, {4}, {4}},
             {uniform(rng, 24, -2, 2), uniform(rng, 4, 0.5, 1.5), uniform(rng, 4, -0.5, 0.5)},
             {true, true, true}, [stats](Tape<double>&, const V& in) {
               BnRunning<double> train{std::span<double>(stats->data(), 4), std::span<double>(stats->data() + 4, 4)};
               BnRunning<double> infer{std::span<double>(stats->data() + 8, 4),
                                       std::span<double>(stats->data() + 12, 4)};
               return V{batchnorm(in[0], in[1], in[2], train, Mode::kTrain),
                        batchnorm(in[0], in[1], in[2], infer, Mode::kInfer)};
             });
  }
  add_case("softmax_cross_entropy", {{4, 5}}, {uniform(rng, 20, -2, 2)}, {true},
           [](Tape<double>&, const V& in) {
             static const int labels[] = {0, 3, 1, 4};
             return V{softmax_cross_entropy(in[0], std::span<const int>(labels))};
           });
  {
    const std::vector<double> centers = {500.0, 1800.0, 4200.0};
    auto synth = std::make_shared<kernels::GaborSynth<double>>(centers, 41, 16000.0);
    add_case("gabor_taps", {{2, 3}}, {uniform(rng, 6, 1.0, 6.0)}, {true},
             [synth](Tape<double>&, const V& in) { return V{gabor_taps(in[0], *synth)}; });
    add_case("centroid_deviation", {{2, 3, 64}}, {uniform(rng, 384, -1, 1)}, {true},
             [centers](Tape<double>&, const V& in) { return V{centroid_deviation(in[0], centers)}; });
  }
  add_case("conv_same", {{2, 3, 24}, {2, 3, 7}, {2, 1, 24}},
           {uniform(rng, 144, -1, 1), uniform(rng, 42, -1, 1), uniform(rng, 48, -1, 1)}, {true, true, true},
           [](Tape<double>&, const V& in) {
             // Per-channel signals, then one signal shared by all channels.
             return V{conv_same(in[0], in[1]), conv_same(in[2], in[1])};
           });
  add_case("spatial_diff", {{2, 5, 8}}, {uniform(rng, 80, -1, 1)}, {true},
           [](Tape<double>&, const V& in) { return V{spatial_diff(in[0], 1), spatial_diff(in[0], 2)}; });
  add_case("octave_cm", {{2, 2, 64}}, {uniform(rng, 256, -1, 1)}, {true},
           [](Tape<double>&, const V& in) { return V{octave_cm(in[0])}; });
  {
    std::vector<double> e(12);
    const LdaKnees knees;
    for (std::size_t i = 0; i < e.size(); ++i)
      e[i] = i % 4 == 0 ? rng.uniform(-120.0, knees.e_lo - 1.0)
             : i % 4 == 3 ? rng.uniform(knees.e_hi + 1.0, 0.0)
                          : rng.uniform(knees.e_lo + 1.0, knees.e_hi - 1.0);
    add_case("lda", {{12}}, {e}, {true}, [knees](Tape<double>&, const V& in) { return V{lda(in[0], knees)}; });
  }
  cases.push_back(detail::frontend_case(kFrontendCases[0], 1, seed));
  cases.push_back(detail::frontend_case(kFrontendCases[1], 3, seed));
  return cases;
}

// Worst relative error |a - n| / max(|a|, |n|, 1e-6) over the probed
// coordinates of every differentiated input.
inline GradCheckResult check_case(const GradCase& c, const GradCheckOptions& opt) {
  detail::Projection proj(mix_seed({opt.seed, 0x7e}));
  std::vector<std::vector<double>> analytic;
  detail::eval_loss(c, proj, c.values, &analytic);
  Rng pick(mix_seed({opt.seed, 0x71}));
  GradCheckResult res;
  res.name = c.name;
  auto values = c.values;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!c.wrt[i]) continue;
    for (std::size_t j : detail::probe_indices(values[i].size(), c.max_probes, pick)) {
      const double x0 = values[i][j];
      values[i][j] = x0 + opt.step;
      const double up = detail::eval_loss(c, proj, values, nullptr);
      values[i][j] = x0 - opt.step;
      const double down = detail::eval_loss(c, proj, values, nullptr);
      values[i][j] = x0;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = analytic[i][j];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      res.max_rel_error = std::max(res.max_rel_error, err);
      ++res.probes;
    }
  }
  res.passed = res.max_rel_error <= opt.tolerance;
  return res;
}

inline std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& opt = {}) {
  std::vector<GradCheckResult> out;
  for (const auto& c : gradcheck_cases(opt.seed)) {
    if (!opt.only.empty() && c.name != opt.only) continue;
    out.push_back(check_case(c, opt));
  }
  return out;
}

}  // namespace adafe::grad
