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

// Run configuration as flat "key = value" text. Lines starting with '#' are
// comments. Every key is listed by config_keys(); anything else is rejected.
//
//   # quieter corpus, longer training
//   task.level_lo_db = -60
//   train.epochs = 50

#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "adafe/error.hpp"
#include "adafe/frontend.hpp"
#include "adafe/train/synth_tasks.hpp"
#include "adafe/train/trainer.hpp"

namespace adafe {

struct RunConfig {
  std::uint64_t seed = 0;
  FrontendConfig frontend;
  train::TrainConfig train;
  train::TaskKind task_kind = train::TaskKind::kLoudnessTones;
  std::optional<std::uint64_t> task_seed;  // unset: the corpus follows seed
  train::TaskOptions task;

  std::uint64_t corpus_seed() const { return task_seed.value_or(seed); }
};

struct ConfigKey {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string fmt_double(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class N>
N parse_number(std::string_view key, std::string_view s) {
  N v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  require(r.ec == std::errc() && r.ptr == s.data() + s.size(), Errc::kInvalidConfig,
          [&] { return std::string(key) + ": cannot parse '" + std::string(s) + "'"; });
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  fail(Errc::kInvalidConfig, std::string(key) + ": expected true or false, got '" + std::string(s) + "'");
}

template <class M>
ConfigKey number_key(std::string name, M RunConfig::*part, auto field) {
  using Field = std::remove_reference_t<decltype(std::declval<M&>().*field)>;
  ConfigKey k;
  k.name = name;
  k.get = [part, field](const RunConfig& c) {
    if constexpr (std::is_floating_point_v<Field>) return fmt_double(c.*part.*field);
    else return std::to_string(c.*part.*field);
  };
  k.set = [name, part, field](RunConfig& c, std::string_view s) { c.*part.*field = parse_number<Field>(name, s); };
  return k;
}

template <class M>
ConfigKey bool_key(std::string name, M RunConfig::*part, bool M::*field) {
  return {name, [part, field](const RunConfig& c) { return std::string(c.*part.*field ? "true" : "false"); },
          [name, part, field](RunConfig& c, std::string_view s) { c.*part.*field = parse_bool(name, s); }};
}

}  // namespace detail

// Every recognised key, in the order the effective config is written.
inline const std::vector<ConfigKey>& config_keys() {
  using detail::bool_key;
  using detail::number_key;
  using F = FrontendConfig;
  using Tr = train::TrainConfig;
  using Tk = train::TaskOptions;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back({"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, std::string_view s) { c.seed = detail::parse_number<std::uint64_t>("seed", s); }});
    k.push_back(number_key("frontend.n_filters", &RunConfig::frontend, &F::n_filters));
    k.push_back(number_key("frontend.diff_order", &RunConfig::frontend, &F::diff_order));
    k.push_back(number_key("frontend.filter_len", &RunConfig::frontend, &F::filter_len));
    k.push_back(number_key("frontend.frame_len_ms", &RunConfig::frontend, &F::frame_len_ms));
    k.push_back(number_key("frontend.f_lo", &RunConfig::frontend, &F::f_lo));
    k.push_back(number_key("frontend.f_hi", &RunConfig::frontend, &F::f_hi));
    k.push_back(number_key("frontend.fixed_q", &RunConfig::frontend, &F::fixed_q));
    k.push_back(number_key("frontend.q_min", &RunConfig::frontend, &F::q_min));
    k.push_back(number_key("frontend.q_max", &RunConfig::frontend, &F::q_max));
    k.push_back(number_key("frontend.q_init", &RunConfig::frontend, &F::q_init));
    k.push_back(bool_key("frontend.lda_enabled", &RunConfig::frontend, &F::lda_enabled));
    k.push_back(bool_key("frontend.fixed_layer_enabled", &RunConfig::frontend, &F::fixed_layer_enabled));
    k.push_back(bool_key("frontend.afc_enabled", &RunConfig::frontend, &F::afc_enabled));
    k.push_back({"frontend.afc_input",
                 [](const RunConfig& c) { return std::string(afc_input_name(c.frontend.afc_input)); },
                 [](RunConfig& c, std::string_view s) { c.frontend.afc_input = parse_afc_input(s); }});
    k.push_back(number_key("frontend.lda_e_lo", &RunConfig::frontend, &F::lda_e_lo));
    k.push_back(number_key("frontend.lda_e_hi", &RunConfig::frontend, &F::lda_e_hi));
    k.push_back(number_key("frontend.lda_q_min", &RunConfig::frontend, &F::lda_q_min));
    k.push_back(number_key("frontend.lda_q_max", &RunConfig::frontend, &F::lda_q_max));
    k.push_back(bool_key("frontend.grad_through_synthesis", &RunConfig::frontend, &F::grad_through_synthesis));
    k.push_back({"train.variant",
                 [](const RunConfig& c) { return std::string(train::variant_name(c.train.variant)); },
                 [](RunConfig& c, std::string_view s) { c.train.variant = train::parse_variant(s); }});
    k.push_back(number_key("train.epochs", &RunConfig::train, &Tr::epochs));
    k.push_back(number_key("train.patience", &RunConfig::train, &Tr::patience));
    k.push_back(number_key("train.batch_size", &RunConfig::train, &Tr::batch_size));
    k.push_back(number_key("train.clip_seconds", &RunConfig::train, &Tr::clip_seconds));
    k.push_back(number_key("train.bptt_window", &RunConfig::train, &Tr::bptt_window));
    k.push_back(number_key("train.hidden", &RunConfig::train, &Tr::hidden));
    k.push_back(bool_key("train.stop_when_perfect", &RunConfig::train, &Tr::stop_when_perfect));
    auto adam_key = [](std::string name, double grad::AdamConfig::*field) {
      return ConfigKey{name, [field](const RunConfig& c) { return detail::fmt_double(c.train.adam.*field); },
                       [name, field](RunConfig& c, std::string_view s) {
                         c.train.adam.*field = detail::parse_number<double>(name, s);
                       }};
    };
    k.push_back(adam_key("train.lr", &grad::AdamConfig::lr));
    k.push_back(adam_key("train.beta1", &grad::AdamConfig::beta1));
    k.push_back(adam_key("train.beta2", &grad::AdamConfig::beta2));
    k.push_back(adam_key("train.eps", &grad::AdamConfig::eps));
    k.push_back(adam_key("train.weight_decay", &grad::AdamConfig::weight_decay));
    k.push_back({"task.kind", [](const RunConfig& c) { return std::string(train::task_kind_name(c.task_kind)); },
                 [](RunConfig& c, std::string_view s) { c.task_kind = train::parse_task_kind(s); }});
    k.push_back({"task.seed",
                 [](const RunConfig& c) { return c.task_seed ? std::to_string(*c.task_seed) : std::string("auto"); },
                 [](RunConfig& c, std::string_view s) {
                   if (s == "auto") c.task_seed.reset();
                   else c.task_seed = detail::parse_number<std::uint64_t>("task.seed", s);
                 }});
    k.push_back(number_key("task.n_train", &RunConfig::task, &Tk::n_train));
    k.push_back(number_key("task.n_valid", &RunConfig::task, &Tk::n_valid));
    k.push_back(number_key("task.n_test", &RunConfig::task, &Tk::n_test));
    k.push_back(number_key("task.clip_seconds", &RunConfig::task, &Tk::clip_seconds));
    k.push_back(number_key("task.level_lo_db", &RunConfig::task, &Tk::level_lo_db));
    k.push_back(number_key("task.level_hi_db", &RunConfig::task, &Tk::level_hi_db));
    k.push_back(number_key("task.snr_lo_db", &RunConfig::task, &Tk::snr_lo_db));
    k.push_back(number_key("task.snr_hi_db", &RunConfig::task, &Tk::snr_hi_db));
    return k;
  }();
  return keys;
}

inline const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

// Applies one "key=value" assignment.
inline void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string_view::npos, Errc::kInvalidConfig,
          [&] { return "expected key=value, got '" + std::string(assignment) + "'"; });
  const std::string key = detail::trim(assignment.substr(0, eq));
  const std::string value = detail::trim(assignment.substr(eq + 1));
  const ConfigKey* k = find_config_key(key);
  require(k != nullptr, Errc::kInvalidConfig, [&] { return "unknown config key '" + key + "'"; });
  k->set(cfg, value);
}

inline void read_config(std::istream& in, RunConfig& cfg) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      apply_override(cfg, t);
    } catch (const Error& e) {
      fail(Errc::kInvalidConfig, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void write_config(std::ostream& os, const RunConfig& cfg) {
  for (const auto& k : config_keys()) os << k.name << " = " << k.get(cfg) << '\n';
}

inline std::string config_text(const RunConfig& cfg) {
  std::ostringstream os;
  write_config(os, cfg);
  return os.str();
}

}  // namespace adafe
