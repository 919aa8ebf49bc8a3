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

// The adafe command line. run_cli() is the whole program; the tool's main()
// only forwards to it, so tests can drive commands in-process.
//
// Exit codes: 0 success, 1 failed check or runtime error, 2 partial batch
// failure, 64 usage error.

#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "adafe/audio_io.hpp"
#include "adafe/config.hpp"
#include "adafe/features.hpp"
#include "adafe/frontend.hpp"
#include "adafe/gabor_bank.hpp"
#include "adafe/grad/gradcheck.hpp"
#include "adafe/grad/params.hpp"
#include "adafe/parallel.hpp"
#include "adafe/train/model.hpp"
#include "adafe/train/synth_tasks.hpp"
#include "adafe/train/trainer.hpp"

namespace adafe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitPartial = 2;
inline constexpr int kExitUsage = 64;

namespace fs = std::filesystem;

namespace detail {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

inline RunConfig load_run_config(const Globals& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    require(static_cast<bool>(in), Errc::kInvalidConfig, [&] { return "cannot open config " + g.config_path; });
    read_config(in, cfg);
  }
  for (const auto& o : g.overrides) apply_override(cfg, o);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), Errc::kIo, [&] { return "cannot write " + path.string(); });
  out << text;
  require(static_cast<bool>(out), Errc::kIo, [&] { return "short write to " + path.string(); });
}

// Effective config next to an artifact: config.txt inside an output
// directory, <file>.config.txt beside a single output file.
inline void echo_config_dir(const fs::path& dir, const RunConfig& cfg) {
  write_text(dir / "config.txt", config_text(cfg));
}

inline void echo_config_file(const fs::path& file, const RunConfig& cfg) {
  write_text(fs::path(file.string() + ".config.txt"), config_text(cfg));
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<float>::max_digits10) << v;
  return os.str();
}

// Controller weights for the direct path: a checkpoint when given, else a
// seeded initialization.
inline grad::ParamStore<float> frontend_params(const FrontendConfig& fcfg, const std::string& params_path,
                                               std::uint64_t seed) {
  grad::ParamStore<float> store;
  if (!params_path.empty()) {
    store = grad::decode_checkpoint<float>(read_file_bytes(params_path));
    if (fcfg.afc_enabled)
      require(store.contains("afc.fc1.weight"), Errc::kInvalidConfig,
              [&] { return params_path + " holds no controller parameters"; });
  } else if (fcfg.afc_enabled) {
    init_afc_params(store, fcfg, seed);
  }
  return store;
}

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = adafe::detail::trim(item);
    if (!t.empty()) out.push_back(adafe::detail::parse_number<double>("list", t));
  }
  return out;
}

inline std::string q_label(double q) {
  std::ostringstream os;
  os << q;
  return os.str();
}

inline train::ToyTask make_task(const RunConfig& cfg) {
  return train::gen_synthetic_task(cfg.task_kind, cfg.corpus_seed(), cfg.task);
}

inline train::TrainConfig train_config(const RunConfig& cfg) {
  train::TrainConfig t = cfg.train;
  t.seed = cfg.seed;
  return t;
}

}  // namespace detail

// ---- commands ----

struct ExtractArgs {
  std::vector<std::string> inputs;
  std::string out_dir;
  std::string params;
  bool csv = false;
};

inline int cmd_extract(const RunConfig& cfg, const ExtractArgs& a, std::ostream& out, std::ostream& err) {
  const FrontendConfig& fcfg = cfg.frontend;
  fcfg.validate();
  const auto store = detail::frontend_params(fcfg, a.params, cfg.seed);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  detail::echo_config_dir(dir, cfg);
  std::vector<std::string> errors(a.inputs.size());
  parallel_for(a.inputs.size(), [&](std::size_t i) {
    const fs::path in(a.inputs[i]);
    try {
      Frontend<float> fe(fcfg, fcfg.afc_enabled ? &store : nullptr);
      const auto res = fe.run_utterance(load_audio(in));
      write_file_bytes(dir / (in.stem().string() + ".adft"), encode_features(res.features));
      if (a.csv) {
        std::ostringstream csv;
        write_features_csv(csv, res.features);
        detail::write_text(dir / (in.stem().string() + ".csv"), csv.str());
      }
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::ostringstream log;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i].empty()) continue;
    ++failed;
    log << a.inputs[i] << ": " << errors[i] << '\n';
  }
  if (failed > 0) {
    detail::write_text(dir / "errors.log", log.str());
    err << log.str();
  }
  out << "extracted " << (a.inputs.size() - failed) << " of " << a.inputs.size() << " files into " << dir.string()
      << '\n';
  return failed == 0 ? kExitOk : kExitPartial;
}

struct DumpFiltersArgs {
  double fc = 3000.0;
  std::string q_list = "1.5,2.0,2.5";
  std::size_t taps = 150;
  std::size_t points = 1025;
  bool normalize = false;
  std::string out;
  std::string taps_out;
};

// Frequency responses of unnormalized (or peak-normalized) Gabor filters
// sharing one center, one magnitude column per Q.
inline int cmd_dump_filters(const RunConfig& cfg, const DumpFiltersArgs& a, std::ostream& out, std::ostream&) {
  const auto qs = detail::parse_list(a.q_list);
  require(!qs.empty(), Errc::kInvalidConfig, "--q needs at least one value");
  const double fs = cfg.frontend.sample_rate;
  std::vector<GaborFilter> bank;
  for (double q : qs)
    bank.push_back(synth_gabor({a.fc, q, a.taps, fs}, a.normalize ? Normalization::kPeakUnity : Normalization::kNone));
  std::vector<std::vector<double>> resp;
  for (const auto& f : bank) resp.push_back(freq_response(f.taps, a.points));
  std::ostringstream os;
  os << "freq_hz";
  for (double q : qs) os << (qs.size() == 1 ? ",magnitude" : ",magnitude_q" + detail::q_label(q));
  os << '\n';
  for (std::size_t i = 0; i < a.points; ++i) {
    os << detail::fmt(fs / 2.0 * static_cast<double>(i) / static_cast<double>(a.points - 1));
    for (const auto& r : resp) os << ',' << detail::fmt(r[i]);
    os << '\n';
  }
  if (a.out.empty()) {
    out << os.str();
  } else {
    detail::write_text(a.out, os.str());
    detail::echo_config_file(a.out, cfg);
  }
  if (!a.taps_out.empty()) {
    std::ostringstream ts;
    ts << "tap_index";
    for (double q : qs) ts << ",tap_q" << detail::q_label(q);
    ts << '\n';
    for (std::size_t i = 0; i < a.taps; ++i) {
      ts << i;
      for (const auto& f : bank) ts << ',' << detail::fmt(f.taps[i]);
      ts << '\n';
    }
    detail::write_text(a.taps_out, ts.str());
  }
  return kExitOk;
}

struct DumpQtraceArgs {
  std::string input;
  std::string out;
  std::string params;
};

inline int cmd_dump_qtrace(const RunConfig& cfg, const DumpQtraceArgs& a, std::ostream& out, std::ostream&) {
  const FrontendConfig& fcfg = cfg.frontend;
  fcfg.validate();
  const auto store = detail::frontend_params(fcfg, a.params, cfg.seed);
  Frontend<float> fe(fcfg, fcfg.afc_enabled ? &store : nullptr);
  const auto res = fe.run_utterance(load_audio(a.input));
  std::ostringstream os;
  res.trace.write_csv(os);
  if (a.out.empty()) {
    out << os.str();
  } else {
    detail::write_text(a.out, os.str());
    detail::echo_config_file(a.out, cfg);
  }
  return kExitOk;
}

struct SynthTaskArgs {
  std::string out_dir;
  bool wav = false;
};

inline int cmd_synth_task(const RunConfig& cfg, const SynthTaskArgs& a, std::ostream& out, std::ostream&) {
  const auto task = detail::make_task(cfg);
  train::assert_disjoint_splits(task);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  detail::write_text(dir / "manifest.json", train::task_manifest(task).dump(2) + "\n");
  detail::echo_config_dir(dir, cfg);
  if (a.wav) {
    fs::create_directories(dir / "wav");
    parallel_for(task.clips.size(), [&](std::size_t i) {
      write_file_bytes(dir / "wav" / (task.clips[i].id + ".wav"), encode_wav(task.clips[i].audio));
    });
  }
  out << task.name << ": " << task.clips.size() << " clips, " << task.num_classes() << " classes -> "
      << dir.string() << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string out_dir;
  bool quiet = false;
};

inline int cmd_train(const RunConfig& cfg, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const auto task = detail::make_task(cfg);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  detail::echo_config_dir(dir, cfg);
  auto progress = [&](const train::EpochStat& s) {
    if (!a.quiet)
      err << "epoch " << s.epoch << " train_loss " << train::fmt_metric(s.train_loss) << " valid_top1 "
          << train::fmt_metric(s.valid_top1) << '\n';
  };
  auto res = train::train(task, detail::train_config(cfg), cfg.frontend, progress);
  write_file_bytes(dir / "model.adfp", grad::encode_checkpoint(res.params));
  detail::write_text(dir / "report.json", train::report_json(res.report).dump(2) + "\n");
  std::ostringstream csv;
  train::write_results_csv(csv, {res.report});
  detail::write_text(dir / "results.csv", csv.str());
  out << res.report.variant << " seed " << res.report.seed << " test top1 " << train::fmt_metric(res.report.top1)
      << " after " << res.report.epochs << " epochs\n";
  return kExitOk;
}

struct EvalArgs {
  std::string params;
  std::string out_dir;
};

inline int cmd_eval(const RunConfig& cfg, const EvalArgs& a, std::ostream& out, std::ostream&) {
  const auto task = detail::make_task(cfg);
  train::check_task(task);
  const FrontendConfig fcfg = train::apply_variant(cfg.frontend, cfg.train.variant);
  auto store = grad::decode_checkpoint<float>(read_file_bytes(a.params));
  auto report = train::evaluate(task, store, fcfg, cfg.train.clip_seconds);
  report.variant = std::string(train::variant_name(cfg.train.variant));
  report.seed = cfg.seed;
  const std::string json = train::report_json(report).dump(2) + "\n";
  if (a.out_dir.empty()) {
    out << json;
  } else {
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    detail::write_text(dir / "eval.json", json);
    detail::echo_config_dir(dir, cfg);
    out << report.variant << " test top1 " << train::fmt_metric(report.top1) << '\n';
  }
  return kExitOk;
}

struct AblateArgs {
  std::string out_dir;
  std::string seeds = "1,2,3";
  std::string variants;  // empty: all six
  bool quiet = false;
};

inline int cmd_ablate(const RunConfig& cfg, const AblateArgs& a, std::ostream& out, std::ostream& err) {
  const auto task = detail::make_task(cfg);
  std::vector<std::uint64_t> seeds;
  for (double s : detail::parse_list(a.seeds)) {
    require(s >= 0 && s == std::floor(s), Errc::kInvalidConfig, "--seeds takes non-negative integers");
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  std::vector<train::Variant> variants(train::kAllVariants.begin(), train::kAllVariants.end());
  if (!a.variants.empty()) {
    variants.clear();
    std::stringstream ss(a.variants);
    std::string v;
    while (std::getline(ss, v, ',')) variants.push_back(train::parse_variant(adafe::detail::trim(v)));
  }
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  detail::echo_config_dir(dir, cfg);
  auto rows = train::ablation_matrix(task, seeds, detail::train_config(cfg), cfg.frontend, variants,
                                     [&](const train::EvalReport& r) {
                                       if (!a.quiet)
                                         err << r.variant << " seed " << r.seed << " top1 "
                                             << train::fmt_metric(r.top1) << " epochs " << r.epochs << '\n';
                                     });
  std::ostringstream results, table;
  train::write_results_csv(results, rows);
  train::write_ablation_table(table, rows);
  detail::write_text(dir / "results.csv", results.str());
  detail::write_text(dir / "ablation.csv", table.str());
  out << table.str();
  return kExitOk;
}

struct GradcheckArgs {
  std::string inject_fault;
  std::string only;
};

inline int cmd_gradcheck(const RunConfig& cfg, const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  grad::injected_fault() = a.inject_fault;
  grad::GradCheckOptions opt;
  opt.seed = cfg.seed;
  opt.only = a.only;
  std::vector<grad::GradCheckResult> results;
  try {
    results = grad::run_gradcheck(opt);
  } catch (...) {
    grad::injected_fault().clear();
    throw;
  }
  grad::injected_fault().clear();
  bool ok = !results.empty();
  out << "op,max_rel_error,probes,status\n";
  for (const auto& r : results) {
    out << r.name << ',' << std::scientific << std::setprecision(3) << r.max_rel_error << std::defaultfloat << ','
        << r.probes << ',' << (r.passed ? "ok" : "FAIL") << '\n';
    if (!r.passed) {
      err << "gradient check failed: " << r.name << '\n';
      ok = false;
    }
  }
  return ok ? kExitOk : kExitCheckFailed;
}

// ---- entry point ----

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"adafe: adaptive Gabor front-end toolkit"};
  app.name("adafe");
  app.require_subcommand(0, 1);
  app.fallthrough();
  detail::Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "override one config key (key=value), repeatable")->take_all();
  auto* seed_opt = app.add_option("--seed", seed_value, "seed for every random choice (overrides the config)");

  ExtractArgs ex;
  auto* c_extract = app.add_subcommand("extract", "compute per-frame features for WAV or raw audio files");
  c_extract->add_option("inputs", ex.inputs, "audio files")->required();
  c_extract->add_option("--out", ex.out_dir, "output directory")->required();
  c_extract->add_option("--params", ex.params, "checkpoint with controller weights");
  c_extract->add_flag("--csv", ex.csv, "also write one CSV per file");

  DumpFiltersArgs df;
  auto* c_filters = app.add_subcommand("dump-filters", "frequency responses of Gabor filters at one center");
  c_filters->add_option("--fc", df.fc, "center frequency in Hz")->capture_default_str();
  c_filters->add_option("--q", df.q_list, "comma-separated Q values")->capture_default_str();
  c_filters->add_option("--taps", df.taps, "filter length")->capture_default_str();
  c_filters->add_option("--points", df.points, "frequency points over [0, fs/2]")->capture_default_str();
  c_filters->add_flag("--normalize", df.normalize, "peak-normalize each filter at fc");
  c_filters->add_option("--out", df.out, "CSV path (default: stdout)");
  c_filters->add_option("--taps-out", df.taps_out, "also write the taps as CSV");

  DumpQtraceArgs dq;
  auto* c_qtrace = app.add_subcommand("dump-qtrace", "per-frame Q and level-rule energy for one clip");
  c_qtrace->add_option("input", dq.input, "audio file")->required();
  c_qtrace->add_option("--out", dq.out, "CSV path (default: stdout)");
  c_qtrace->add_option("--params", dq.params, "checkpoint with controller weights");

  SynthTaskArgs st;
  auto* c_synth = app.add_subcommand("synth-task", "generate a synthetic task and its manifest");
  c_synth->add_option("--out", st.out_dir, "output directory")->required();
  c_synth->add_flag("--wav", st.wav, "also write every clip as 16-bit WAV");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train one variant and write a checkpoint and report");
  c_train->add_option("--out", tr.out_dir, "output directory")->required();
  c_train->add_flag("--quiet", tr.quiet, "no per-epoch progress");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  c_eval->add_option("--params", ev.params, "checkpoint from train")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--out", ev.out_dir, "output directory (default: JSON to stdout)");

  AblateArgs ab;
  auto* c_ablate = app.add_subcommand("ablate", "train every variant for every seed and tabulate");
  c_ablate->add_option("--out", ab.out_dir, "output directory")->required();
  c_ablate->add_option("--seeds", ab.seeds, "comma-separated model seeds")->capture_default_str();
  c_ablate->add_option("--variants", ab.variants, "comma-separated subset of variants");
  c_ablate->add_flag("--quiet", ab.quiet, "no per-run progress");

  GradcheckArgs gc;
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  c_grad->add_option("--inject-fault", gc.inject_fault, "corrupt the backward pass of the named op");
  c_grad->add_option("--only", gc.only, "run a single case");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "adafe: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }
  if (app.get_subcommands().empty()) {
    err << app.help("", CLI::AppFormatMode::All);
    return kExitUsage;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;

  RunConfig cfg;
  try {
    cfg = detail::load_run_config(g);
  } catch (const Error& e) {
    err << "adafe: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    if (c_extract->parsed()) return cmd_extract(cfg, ex, out, err);
    if (c_filters->parsed()) return cmd_dump_filters(cfg, df, out, err);
    if (c_qtrace->parsed()) return cmd_dump_qtrace(cfg, dq, out, err);
    if (c_synth->parsed()) return cmd_synth_task(cfg, st, out, err);
    if (c_train->parsed()) return cmd_train(cfg, tr, out, err);
    if (c_eval->parsed()) return cmd_eval(cfg, ev, out, err);
    if (c_ablate->parsed()) return cmd_ablate(cfg, ab, out, err);
    if (c_grad->parsed()) return cmd_gradcheck(cfg, gc, out, err);
  } catch (const Error& e) {
    err << "adafe: " << e.what() << '\n';
    return e.code() == Errc::kInvalidConfig ? kExitUsage : kExitCheckFailed;
  } catch (const std::exception& e) {
    err << "adafe: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitUsage;
}

}  // namespace adafe::cli
