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


// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion names
// as arguments to run a subset. Artifacts of the training run go to
// $ADAFE_ACCEPTANCE_DIR (default: a fresh directory under the system temp).

#include <chrono>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "adafe/cli.hpp"
#include "adafe/features.hpp"
#include "adafe/frontend.hpp"
#include "adafe/gabor_bank.hpp"
#include "adafe/grad/gradcheck.hpp"
#include "adafe/rng.hpp"
#include "adafe/train/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using namespace adafe;

constexpr double kFs = 16000.0;
constexpr std::size_t kE2eEpochCap = 3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

fs::path artifact_root() {
  if (const char* d = std::getenv("ADAFE_ACCEPTANCE_DIR")) return d;
  return fs::temp_directory_path() / "adafe_acceptance";
}

std::vector<float> noise(std::uint64_t seed, std::size_t n, double amp) {
  Rng rng(seed);
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-amp, amp));
  return x;
}

Waveform wave(std::vector<float> x) {
  Waveform w;
  w.samples = std::move(x);
  w.sample_rate = kTargetRate;
  return w;
}

double dtft_mag(const std::vector<double>& taps, double hz) {
  std::complex<double> acc = 0.0;
  const double w = 2.0 * std::numbers::pi * hz / kFs;
  for (std::size_t n = 0; n < taps.size(); ++n) acc += taps[n] * std::polar(1.0, -w * static_cast<double>(n));
  return std::abs(acc);
}

Outcome gain_law() {
  const double fc = 3000.0, omega_c = 2.0 * std::numbers::pi * fc / kFs;
  double worst = 0.0;
  for (double q : {0.5, 1.0, 1.5, 2.0, 2.5, 4.0, 8.0}) {
    const auto f = synth_gabor({fc, q, 150, kFs}, Normalization::kNone);
    const double expected = std::sqrt(2.0) * std::numbers::pi * q / omega_c;
    worst = std::max(worst, std::abs(dtft_mag(f.taps, fc) - expected) / expected);
  }
  std::vector<double> peaks;
  for (double q : {1.5, 2.0, 2.5}) {
    const auto f = synth_gabor({fc, q, 150, kFs}, Normalization::kNone);
    double p = 0.0;
    for (double hz = 0.0; hz <= kFs / 2; hz += 0.5) p = std::max(p, dtft_mag(f.taps, hz));
    peaks.push_back(p);
  }
  const double r1 = peaks[1] / peaks[0] / (2.0 / 1.5) - 1.0, r2 = peaks[2] / peaks[0] / (2.5 / 1.5) - 1.0;
  const double ratio_err = std::max(std::abs(r1), std::abs(r2));
  return {worst < 0.02 && ratio_err < 0.01,
          "max gain error " + num(100 * worst) + "%, ratio error " + num(100 * ratio_err) + "%"};
}

Outcome shapes() {
  FrontendConfig cfg;
  grad::ParamStore<float> store;
  init_afc_params(store, cfg, 1);
  Frontend<float> fe(cfg, &store);
  const auto r = fe.run_utterance(wave(noise(1, 16000, 0.3)));
  const std::size_t T = r.trace.frames, A = r.trace.channels, D = pool_features(r.features).size();
  const bool ok = cfg.n_filters == 40 && cfg.diff_order == 1 && cfg.filter_len == 150 && T == 91 && A == 39 &&
                  r.subbands.channels == 39 && r.features.size() == 91 && r.features[0].flatten().size() == 39 * 6 &&
                  D == 39 * 6;
  return {ok, "T=" + std::to_string(T) + " channels=" + std::to_string(A) + " features=" + std::to_string(D)};
}

Outcome gradient_suite() {
  const auto results = grad::run_gradcheck();
  double worst = 0.0;
  std::string failed;
  std::set<std::string> seen;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_rel_error);
    seen.insert(r.name);
    if (!r.passed) failed += " " + r.name;
  }
  bool covered = seen.contains(grad::kFrontendCases[0]);
  for (const auto& op : grad::registered_ops()) covered = covered && seen.contains(op);
  return {failed.empty() && covered,
          std::to_string(results.size()) + " cases, worst " + num(worst, 3) + (failed.empty() ? "" : ", failed:" + failed)};
}

Outcome causality() {
  std::size_t checks = 0, violations = 0, silent = 0;
  for (auto v : train::kAllVariants) {
    const FrontendConfig cfg = train::apply_variant(FrontendConfig{}, v);
    grad::ParamStore<float> store;
    if (cfg.afc_enabled) init_afc_params(store, cfg, 2);
    Frontend<float> fe(cfg, cfg.afc_enabled ? &store : nullptr);
    auto frames = frame_signal(wave(noise(3, 30 * 176, 0.2)));
    const auto base = fe.run_frames(frames).trace;
    for (std::size_t t : {0u, 7u, 20u}) {
      auto mutated = frames;
      Rng rng(t + 100);
      for (std::size_t i = 0; i < 176; ++i) mutated.data[t * 176 + i] = static_cast<float>(rng.uniform(-0.9, 0.9));
      const auto m = fe.run_frames(mutated).trace;
      for (std::size_t s = 0; s <= t; ++s)
        for (std::size_t c = 0; c < base.channels; ++c) violations += m.q_at(s, c) != base.q_at(s, c);
      bool moved = false;
      for (std::size_t c = 0; c < base.channels; ++c) moved = moved || m.q_at(t + 1, c) != base.q_at(t + 1, c);
      // The frozen baseline has no feedback, so Q never moves.
      if (!moved && v != train::Variant::kFrozenQBaseline) ++silent;
      ++checks;
    }
  }
  return {violations == 0 && silent == 0, std::to_string(checks) + " mutations, " + std::to_string(violations) +
                                              " early changes, " + std::to_string(silent) + " without effect at t+1"};
}

Outcome q_energy_opposition() {
  FrontendConfig cfg;
  grad::ParamStore<float> store;
  init_afc_params(store, cfg, 1);
  Frontend<float> fe(cfg, &store);
  std::vector<float> x(16000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i) / kFs;
    const double env = 0.5 * (1.0 + 0.9 * std::sin(2.0 * std::numbers::pi * 4.0 * t));
    x[i] = static_cast<float>(0.3 * env * std::sin(2.0 * std::numbers::pi * 1000.0 * t));
  }
  const auto tr = fe.run_utterance(wave(x)).trace;
  const auto corr = train::q_energy_lagged_corr(tr);
  // Active: mean level within 30 dB of the loudest channel.
  std::vector<double> mean_db(tr.channels, 0.0);
  for (std::size_t t = 0; t < tr.frames; ++t)
    for (std::size_t c = 0; c < tr.channels; ++c) mean_db[c] += tr.energy_at(t, c) / tr.frames;
  const double loudest = *std::max_element(mean_db.begin(), mean_db.end());
  std::size_t active = 0, negative = 0;
  for (std::size_t c = 0; c < tr.channels; ++c) {
    if (mean_db[c] < loudest - 30.0 || std::isnan(corr[c])) continue;
    ++active;
    negative += corr[c] < 0.0;
  }
  const double frac = active ? static_cast<double>(negative) / active : 0.0;
  return {active > 0 && frac >= 0.70,
          std::to_string(negative) + " of " + std::to_string(active) + " active channels negative"};
}

Outcome cm_oracle() {
  const double edges[] = {250, 500, 1000, 2000, 4000, 8000};
  Rng rng(42);
  double worst = 0.0;
  const auto ob = OctaveBins::make();
  for (int i = 0; i < 100; ++i) {
    std::vector<double> env(257);
    for (auto& v : env) v = rng.uniform(0.0, 10.0);
    for (std::size_t j = 1; j <= 5; ++j) {
      double num_ = 0.0, den = 0.0;
      for (std::size_t k = 0; k < env.size(); ++k) {
        const double f = static_cast<double>(k) * kFs / 512.0;
        if (f >= edges[j - 1] && f < edges[j]) {
          num_ += f * env[k];
          den += f;
        }
      }
      worst = std::max(worst, std::abs(centroid_magnitude<double>(env, j, ob) - num_ / den));
    }
  }
  return {worst <= 1e-12, "500 values, max abs error " + num(worst, 3)};
}

Outcome end_to_end() {
  const fs::path dir = artifact_root() / "ablation";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto task = train::gen_synthetic_task(train::TaskKind::kLoudnessTones, 2024);
  train::TrainConfig tcfg;
  tcfg.epochs = kE2eEpochCap;
  std::cout << "  ... training 6 variants x 3 seeds, up to " << kE2eEpochCap << " epochs each" << std::endl;
  const auto rows = train::ablation_matrix(task, {1, 2, 3}, tcfg, FrontendConfig{},
                                           {train::kAllVariants.begin(), train::kAllVariants.end()},
                                           [](const train::EvalReport& r) {
                                             std::cout << "  ... " << r.variant << " seed " << r.seed << " top1 "
                                                       << train::fmt_metric(r.top1) << " epochs " << r.epochs
                                                       << std::endl;
                                           });
  std::ostringstream results, table;
  train::write_results_csv(results, rows);
  train::write_ablation_table(table, rows);
  cli::detail::write_text(dir / "results.csv", results.str());
  cli::detail::write_text(dir / "ablation.csv", table.str());
  const auto agg = train::aggregate(rows);
  double ada = -1, sfm = -1;
  for (const auto& a : agg) {
    if (a.variant == "ada_fe") ada = a.top1_mean;
    if (a.variant == "ada_fe_s_fm") sfm = a.top1_mean;
  }
  const bool shaped = agg.size() == 6 && std::all_of(agg.begin(), agg.end(), [](const auto& a) { return a.runs == 3; });
  return {shaped && ada >= 0.85 && sfm >= 0.85, "ada_fe " + num(ada) + ", ada_fe_s_fm " + num(sfm) +
                                                    " (mean of 3 seeds), table at " + (dir / "ablation.csv").string()};
}

// Runs every CLI command twice with the same seed and config and compares
// every file written plus stdout.
Outcome determinism() {
  const fs::path root = artifact_root() / "determinism";
  fs::remove_all(root);
  const fs::path input = root / "input.wav";
  fs::create_directories(root);
  {
    std::vector<float> x = noise(5, 12000, 0.2);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.3f * static_cast<float>(std::sin(0.4 * i));
    write_file_bytes(input, encode_wav(wave(x)));
  }
  const std::vector<std::string> tiny = {"--seed", "7", "--set", "task.n_train=16", "task.n_valid=8",
                                         "task.n_test=8", "train.epochs=1"};
  auto commands = [&](const fs::path& d) {
    std::vector<std::vector<std::string>> c = {
        {"extract", input.string(), "--out", (d / "extract").string(), "--csv"},
        {"dump-filters", "--out", (d / "filters.csv").string(), "--taps-out", (d / "taps.csv").string()},
        {"dump-qtrace", input.string(), "--out", (d / "qtrace.csv").string()},
        {"synth-task", "--out", (d / "task").string(), "--wav"},
        {"train", "--out", (d / "train").string(), "--quiet"},
        {"eval", "--params", (d / "train" / "model.adfp").string(), "--out", (d / "eval").string()},
        {"ablate", "--out", (d / "ablate").string(), "--seeds", "1", "--variants", "ada_fe,frozen_q_baseline",
         "--quiet"},
        {"gradcheck", "--only", "conv_same"}};
    for (auto& args : c) args.insert(args.begin(), tiny.begin(), tiny.end());
    return c;
  };
  std::vector<std::string> stdout_a, stdout_b;
  std::size_t failures = 0;
  for (const auto& [dir, sink] : {std::pair{root / "a", &stdout_a}, std::pair{root / "b", &stdout_b}}) {
    for (auto args : commands(dir)) {
      args.insert(args.begin(), "adafe");
      std::vector<char*> argv;
      for (auto& s : args) argv.push_back(s.data());
      std::ostringstream out, err;
      if (cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err) != 0) ++failures;
      // Messages naming the output directory differ by construction.
      std::string text = out.str();
      for (std::size_t p; (p = text.find(dir.string())) != std::string::npos;) text.replace(p, dir.string().size(), "DIR");
      sink->push_back(text);
    }
  }
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto other = root / "b" / fs::relative(e.path(), root / "a");
    if (!fs::exists(other) || read_file_bytes(e.path()) != read_file_bytes(other)) {
      ++differing;
      std::cout << "  ... differs: " << fs::relative(e.path(), root / "a").string() << std::endl;
    }
  }
  const bool same_stdout = stdout_a == stdout_b;
  return {failures == 0 && differing == 0 && same_stdout && files > 0,
          std::to_string(files) + " files compared, " + std::to_string(differing) + " differ, stdout " +
              (same_stdout ? "identical" : "differs") + (failures ? ", a command failed" : "")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"gain_law", 5, gain_law},
      {"shape_contract", 5, shapes},
      {"gradient_suite", 60, gradient_suite},
      {"feedback_causality", 10, causality},
      {"q_energy_opposition", 10, q_energy_opposition},
      {"cm_oracle", 5, cm_oracle},
      {"end_to_end_training", 1800, end_to_end},
      {"determinism", 600, determinism},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.name)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::cout << (pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << " [" << num(secs, 3) << " s, limit "
              << c.budget_s << " s" << (in_time ? "" : ", over time") << "]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
