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

// Front-end plus a small classifier over frame-pooled features:
//   pooled -> BN -> FC(hidden) -> ReLU -> FC(classes)
// and the variants compared by the ablation harness.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adafe/error.hpp"
#include "adafe/features.hpp"
#include "adafe/frontend.hpp"
#include "adafe/grad/ops.hpp"
#include "adafe/grad/params.hpp"
#include "adafe/rng.hpp"

namespace adafe::train {

enum class Variant { kAdaFe, kAdaFeSFm, kAdaFeSEg, kAdaFeSEgFm, kFrozenQBaseline, kNoFixedLayer };

inline constexpr std::array<Variant, 6> kAllVariants = {
    Variant::kAdaFe,      Variant::kAdaFeSFm,        Variant::kAdaFeSEg,
    Variant::kAdaFeSEgFm, Variant::kFrozenQBaseline, Variant::kNoFixedLayer};

inline std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kAdaFe: return "ada_fe";
    case Variant::kAdaFeSFm: return "ada_fe_s_fm";
    case Variant::kAdaFeSEg: return "ada_fe_s_eg";
    case Variant::kAdaFeSEgFm: return "ada_fe_s_egfm";
    case Variant::kFrozenQBaseline: return "frozen_q_baseline";
    case Variant::kNoFixedLayer: return "no_fixed_layer";
  }
  return "ada_fe";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : kAllVariants)
    if (variant_name(v) == s) return v;
  fail(Errc::kInvalidConfig, "unknown variant " + std::string(s));
}

// Front-end flags implied by a variant; everything else comes from base.
inline FrontendConfig apply_variant(FrontendConfig cfg, Variant v) {
  cfg.lda_enabled = true;
  cfg.fixed_layer_enabled = true;
  cfg.afc_enabled = true;
  cfg.afc_input = AfcInput::kFm;
  switch (v) {
    case Variant::kAdaFe: break;
    case Variant::kAdaFeSFm: cfg.lda_enabled = false; break;
    case Variant::kAdaFeSEg:
      cfg.lda_enabled = false;
      cfg.afc_input = AfcInput::kEnergy;
      break;
    case Variant::kAdaFeSEgFm:
      cfg.lda_enabled = false;
      cfg.afc_input = AfcInput::kEnergyFm;
      break;
    case Variant::kFrozenQBaseline:
      cfg.lda_enabled = false;
      cfg.afc_enabled = false;
      break;
    case Variant::kNoFixedLayer: cfg.fixed_layer_enabled = false; break;
  }
  return cfg;
}

inline std::size_t descriptor_width(const FrontendConfig& cfg) {
  return cfg.output_channels() * kFeaturesPerChannel;
}

// afc.* (when the controller is on) followed by clf.*.
template <class T>
grad::ParamStore<T> init_model_params(const FrontendConfig& cfg, std::size_t num_classes,
                                      std::uint64_t seed, std::size_t hidden = 128) {
  grad::ParamStore<T> store;
  if (cfg.afc_enabled) init_afc_params(store, cfg, seed);
  const std::size_t D = descriptor_width(cfg);
  Rng rng(mix_seed({seed, 0xc1f}));
  auto uniform = [&](std::size_t n, double bound) {
    std::vector<T> w(n);
    for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
    return w;
  };
  store.add("clf.bn.gamma", {D}, std::vector<T>(D, T(1)));
  store.add("clf.bn.beta", {D}, std::vector<T>(D, T(0)));
  store.add("clf.bn.running_mean", {D}, std::vector<T>(D, T(0)), false);
  store.add("clf.bn.running_var", {D}, std::vector<T>(D, T(1)), false);
  store.add("clf.fc1.weight", {D, hidden}, uniform(D * hidden, std::sqrt(6.0 / D)));
  store.add("clf.fc1.bias", {hidden}, std::vector<T>(hidden, T(0)));
  store.add("clf.fc2.weight", {hidden, num_classes}, uniform(hidden * num_classes, 1.0 / std::sqrt(hidden)));
  store.add("clf.fc2.bias", {num_classes}, std::vector<T>(num_classes, T(0)));
  return store;
}

template <class T>
grad::Var<T> classifier_graph(grad::Var<T> x, grad::ParamStore<T>& store,
                              const std::vector<grad::Var<T>>& vars, grad::Mode mode) {
  using namespace grad;
  auto v = [&](const char* n) { return vars.at(store.find(n)); };
  BnRunning<T> running{std::span<T>(store.at("clf.bn.running_mean").value),
                       std::span<T>(store.at("clf.bn.running_var").value)};
  auto xn = batchnorm(x, v("clf.bn.gamma"), v("clf.bn.beta"), running, mode);
  auto h = relu(add(matmul(xn, v("clf.fc1.weight")), v("clf.fc1.bias")));
  return add(matmul(h, v("clf.fc2.weight")), v("clf.fc2.bias"));
}

template <class T>
struct BatchTrace {
  std::size_t frames = 0, channels = 0;
  std::vector<std::vector<double>> q;          // per utterance, frames x channels
  std::vector<std::vector<double>> energy_db;  // per utterance, frames x channels
};

// Runs the recorded front-end over equally long frame sequences in lockstep
// and returns the pooled descriptor [B, D] (layout of pool_features()).
// Q is detached after every bptt_window frames (0 keeps the whole chain).
template <class T>
grad::Var<T> pooled_descriptor(grad::Tape<T>& tape, TapeFrontend<T>& fe,
                               const std::vector<const FrameSequence*>& batch, AfcVars<T>* afc,
                               grad::Mode mode, std::size_t bptt_window, BatchTrace<T>* trace = nullptr) {
  using namespace grad;
  require(!batch.empty(), Errc::kShapeMismatch, "empty batch");
  const std::size_t B = batch.size(), T_frames = batch.front()->num_frames;
  for (const auto* fs : batch) require(fs->num_frames == T_frames, Errc::kShapeMismatch, "ragged batch");
  const std::size_t O = fe.config().output_channels(), A = fe.config().adaptive_channels();
  if (trace) {
    trace->frames = T_frames;
    trace->channels = A;
    trace->q.assign(B, {});
    trace->energy_db.assign(B, {});
  }
  Var<T> q = fe.initial_q(tape, B);
  Var<T> sum_e, sum_cm;
  std::vector<std::span<const float>> frames(B);
  for (std::size_t t = 0; t < T_frames; ++t) {
    for (std::size_t b = 0; b < B; ++b) frames[b] = batch[b]->frame(t);
    auto in = fe.frame_input(tape, frames);
    if (trace) {
      for (std::size_t b = 0; b < B; ++b)
        trace->q[b].insert(trace->q[b].end(), q.value().begin() + b * A, q.value().begin() + (b + 1) * A);
    }
    auto s = fe.step(tape, in, q, afc, mode);
    if (trace) {
      const auto& e = s.energy_db.value();
      for (std::size_t b = 0; b < B; ++b)
        trace->energy_db[b].insert(trace->energy_db[b].end(), e.begin() + b * A, e.begin() + (b + 1) * A);
    }
    sum_e = t == 0 ? s.log_energy : add(sum_e, s.log_energy);
    sum_cm = t == 0 ? s.cm : add(sum_cm, s.cm);
    q = (bptt_window > 0 && (t + 1) % bptt_window == 0) ? detach(s.q_next) : s.q_next;
  }
  const T inv = T(1) / static_cast<T>(T_frames);
  auto pooled_e = affine(sum_e, inv, T(0));
  auto pooled_cm = reshape(log(affine(sum_cm, inv, static_cast<T>(kLogEnergyFloor))), {B, O * kOctaves});
  return concat_last(pooled_e, pooled_cm);
}

// Classifier logits for precomputed descriptors (row-major n x D), infer
// mode.
template <class T>
std::vector<T> classify(grad::ParamStore<T>& store, std::span<const T> descriptors, std::size_t n) {
  grad::Tape<T> tape;
  auto vars = store.bind(tape);
  const std::size_t D = store.at("clf.bn.gamma").value.size();
  require(descriptors.size() == n * D, Errc::kShapeMismatch, "descriptor block");
  auto x = tape.constant({n, D}, std::vector<T>(descriptors.begin(), descriptors.end()));
  return classifier_graph(x, store, vars, grad::Mode::kInfer).value();
}

}  // namespace adafe::train
