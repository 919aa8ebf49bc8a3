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

// Seeded synthetic classification tasks. Every clip draws from its own RNG
// stream, keyed by (task seed, split, index), so a clip never depends on how
// many clips were generated before it.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "adafe/audio_io.hpp"
#include "adafe/error.hpp"
#include "adafe/rng.hpp"

namespace adafe::train {

enum class TaskKind { kLoudnessTones, kChirpClasses, kNoisyVowels };
enum class Split { kTrain, kValid, kTest };

inline std::string_view task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::kLoudnessTones: return "loudness_tones";
    case TaskKind::kChirpClasses: return "chirp_classes";
    case TaskKind::kNoisyVowels: return "noisy_vowels";
  }
  return "loudness_tones";
}

inline TaskKind parse_task_kind(std::string_view s) {
  if (s == "loudness_tones") return TaskKind::kLoudnessTones;
  if (s == "chirp_classes") return TaskKind::kChirpClasses;
  if (s == "noisy_vowels") return TaskKind::kNoisyVowels;
  fail(Errc::kInvalidConfig, "unknown task kind " + std::string(s));
}

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

struct TaskOptions {
  std::size_t n_train = 600;
  std::size_t n_valid = 100;
  std::size_t n_test = 100;
  double clip_seconds = 1.0;
  double level_lo_db = -40.0;  // loudness_tones peak level range, dB FS
  double level_hi_db = 0.0;
  double snr_lo_db = 0.0;
  double snr_hi_db = 30.0;
};

struct Clip {
  std::string id;
  int label = 0;
  Split split = Split::kTrain;
  Waveform audio;
  nlohmann::ordered_json params;  // generator parameters, for the manifest
};

struct ToyTask {
  TaskKind kind = TaskKind::kLoudnessTones;
  std::string name;
  std::vector<std::string> classes;
  std::vector<Clip> clips;
  std::uint64_t generator_seed = 0;
  TaskOptions options;

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < clips.size(); ++i)
      if (clips[i].split == s) out.push_back(i);
    return out;
  }
  std::size_t num_classes() const { return classes.size(); }
};

// FNV-1a over the clip's sample bits.
inline std::uint64_t clip_hash(const Waveform& w) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (float v : w.samples) {
    const std::uint32_t bits = detail::bits_from_float(v);
    for (int i = 0; i < 4; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// Throws DataLeak when any clip content appears in two splits.
inline void assert_disjoint_splits(const ToyTask& task) {
  std::map<std::uint64_t, Split> seen;
  for (const auto& c : task.clips) {
    const auto h = clip_hash(c.audio);
    auto [it, fresh] = seen.emplace(h, c.split);
    require(fresh || it->second == c.split, Errc::kDataLeak,
            [&] { return "clip " + c.id + " duplicates content from split " + std::string(split_name(it->second)); });
  }
}

namespace detail {

inline double peak(const std::vector<float>& x) {
  double m = 0.0;
  for (float v : x) m = std::max(m, static_cast<double>(std::abs(v)));
  return m;
}

inline double power(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

// Adds white noise at snr_db relative to the signal power, then scales the
// mixture so its peak sits at level_db dB FS.
inline std::vector<float> mix_and_level(std::vector<double> x, double snr_db, double level_db, Rng& rng) {
  const double sigma = std::sqrt(power(x) / std::pow(10.0, snr_db / 10.0));
  for (double& v : x) v += sigma * rng.normal();
  double pk = 0.0;
  for (double v : x) pk = std::max(pk, std::abs(v));
  const double gain = pk > 0.0 ? std::pow(10.0, level_db / 20.0) / pk : 0.0;
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(x[i] * gain);
  return out;
}

inline constexpr std::array<double, 8> kToneHz = {250, 400, 630, 1000, 1600, 2500, 4000, 6300};

inline Clip make_tone(int label, std::size_t n, const TaskOptions& o, Rng& rng) {
  Clip c;
  const double f = kToneHz[label] * rng.uniform(0.98, 1.02);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double level = rng.uniform(o.level_lo_db, o.level_hi_db);
  const double snr = rng.uniform(o.snr_lo_db, o.snr_hi_db);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * std::numbers::pi * f * i / kTargetRate + phase);
  c.audio.samples = mix_and_level(std::move(x), snr, level, rng);
  c.params = {{"freq_hz", f}, {"level_db", level}, {"snr_db", snr}};
  return c;
}

// Linear sweeps: up, down, flat, fast up, fast down.
inline Clip make_chirp(int label, std::size_t n, const TaskOptions& o, Rng& rng) {
  static constexpr std::array<std::array<double, 2>, 5> kSweeps = {
      {{600, 1800}, {1800, 600}, {1200, 1200}, {400, 4000}, {4000, 400}}};
  Clip c;
  const double jitter = rng.uniform(0.9, 1.1);
  const double f0 = kSweeps[label][0] * jitter, f1 = kSweeps[label][1] * jitter;
  const double level = rng.uniform(-30.0, -6.0);
  const double snr = rng.uniform(std::max(o.snr_lo_db, 10.0), o.snr_hi_db);
  const double dur = static_cast<double>(n) / kTargetRate;
  double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kTargetRate;
    const double f = f0 + (f1 - f0) * t / dur;
    x[i] = std::sin(phase);
    phase += 2.0 * std::numbers::pi * f / kTargetRate;
  }
  c.audio.samples = mix_and_level(std::move(x), snr, level, rng);
  c.params = {{"f_start_hz", f0}, {"f_end_hz", f1}, {"level_db", level}, {"snr_db", snr}};
  return c;
}

// Pulse train through two second-order resonators at the vowel's formants.
inline Clip make_vowel(int label, std::size_t n, const TaskOptions& o, Rng& rng) {
  static constexpr std::array<std::array<double, 2>, 4> kFormants = {
      {{730, 1090}, {270, 2290}, {300, 870}, {530, 1840}}};
  Clip c;
  const double f0 = rng.uniform(100.0, 200.0);
  const double shift = rng.uniform(0.95, 1.05);
  const double level = rng.uniform(-30.0, -6.0);
  const double snr = rng.uniform(std::max(o.snr_lo_db, 5.0), o.snr_hi_db);
  std::vector<double> src(n, 0.0);
  const double period = kTargetRate / f0;
  for (double p = rng.uniform(0.0, period); p < static_cast<double>(n); p += period)
    src[static_cast<std::size_t>(p)] = 1.0;
  std::vector<double> x(n, 0.0);
  for (int k = 0; k < 2; ++k) {
    const double fc = kFormants[label][k] * shift, bw = 80.0 + 40.0 * k;
    const double r = std::exp(-std::numbers::pi * bw / kTargetRate);
    const double a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * fc / kTargetRate), a2 = -r * r;
    double y1 = 0.0, y2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = src[i] + a1 * y1 + a2 * y2;
      x[i] += y;
      y2 = y1;
      y1 = y;
    }
  }
  c.audio.samples = mix_and_level(std::move(x), snr, level, rng);
  c.params = {{"f0_hz", f0}, {"formant_shift", shift}, {"level_db", level}, {"snr_db", snr}};
  return c;
}

}  // namespace detail

inline ToyTask gen_synthetic_task(TaskKind kind, std::uint64_t seed, const TaskOptions& opt = {}) {
  require(opt.clip_seconds > 0.0, Errc::kInvalidConfig, "clip_seconds must be positive");
  require(opt.level_lo_db <= opt.level_hi_db && opt.level_hi_db <= 0.0, Errc::kInvalidConfig,
          "level range must lie at or below 0 dB FS");
  ToyTask task;
  task.kind = kind;
  task.name = std::string(task_kind_name(kind));
  task.generator_seed = seed;
  task.options = opt;
  switch (kind) {
    case TaskKind::kLoudnessTones:
      for (double f : detail::kToneHz) task.classes.push_back("tone_" + std::to_string(static_cast<int>(f)));
      break;
    case TaskKind::kChirpClasses:
      task.classes = {"up", "down", "flat", "fast_up", "fast_down"};
      break;
    case TaskKind::kNoisyVowels:
      task.classes = {"a", "i", "u", "e"};
      break;
  }
  const std::size_t K = task.classes.size();
  const std::size_t n = static_cast<std::size_t>(std::llround(opt.clip_seconds * kTargetRate));
  const std::array<std::pair<Split, std::size_t>, 3> splits = {
      {{Split::kTrain, opt.n_train}, {Split::kValid, opt.n_valid}, {Split::kTest, opt.n_test}}};
  for (const auto& [split, total] : splits) {
    const std::size_t per_class = total / K;
    require(per_class >= 1, Errc::kTaskTooSmall,
            [&] { return std::string(split_name(split)) + " split cannot hold one clip per class"; });
    for (std::size_t i = 0; i < per_class * K; ++i) {
      const int label = static_cast<int>(i % K);
      Rng rng(mix_seed({seed, static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(split), i}));
      Clip c;
      switch (kind) {
        case TaskKind::kLoudnessTones: c = detail::make_tone(label, n, opt, rng); break;
        case TaskKind::kChirpClasses: c = detail::make_chirp(label, n, opt, rng); break;
        case TaskKind::kNoisyVowels: c = detail::make_vowel(label, n, opt, rng); break;
      }
      c.label = label;
      c.split = split;
      c.id = task.name + "-" + std::string(split_name(split)) + "-" + std::to_string(i);
      c.audio.source_id = c.id;
      c.audio.sample_rate = kTargetRate;
      task.clips.push_back(std::move(c));
    }
  }
  assert_disjoint_splits(task);
  return task;
}

inline nlohmann::ordered_json task_manifest(const ToyTask& task) {
  nlohmann::ordered_json j;
  j["name"] = task.name;
  j["generator_seed"] = task.generator_seed;
  j["classes"] = task.classes;
  j["options"] = {{"n_train", task.options.n_train},         {"n_valid", task.options.n_valid},
                  {"n_test", task.options.n_test},           {"clip_seconds", task.options.clip_seconds},
                  {"level_lo_db", task.options.level_lo_db}, {"level_hi_db", task.options.level_hi_db},
                  {"snr_lo_db", task.options.snr_lo_db},     {"snr_hi_db", task.options.snr_hi_db}};
  auto& clips = j["clips"] = nlohmann::ordered_json::array();
  for (const auto& c : task.clips) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(clip_hash(c.audio)));
    clips.push_back({{"id", c.id},
                     {"label", c.label},
                     {"split", split_name(c.split)},
                     {"hash", hash},
                     {"params", c.params}});
  }
  return j;
}

// Peak level of a clip in dB FS.
inline double peak_db(const Waveform& w) { return 20.0 * std::log10(std::max(detail::peak(w.samples), 1e-12)); }

}  // namespace adafe::train
