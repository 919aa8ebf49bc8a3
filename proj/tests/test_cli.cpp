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


#include <fstream>

#include "adafe/cli.hpp"
#include "test_util.hpp"

namespace adafe::cli {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "adafe");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

const std::vector<std::string> kTinyTask = {"--set", "task.n_train=16", "task.n_valid=8", "task.n_test=8",
                                            "train.epochs=1"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTinyTask.begin(), kTinyTask.end());
  return args;
}

TEST(Cli, HelpListsCommandsAndFlags) {
  const auto r = cli({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  for (const char* word : {"extract", "dump-filters", "dump-qtrace", "synth-task", "train", "eval", "ablate",
                           "gradcheck", "--config", "--set", "--seed", "--inject-fault", "--normalize", "--csv",
                           "--params", "--seeds", "--variants"})
    EXPECT_NE(r.out.find(word), std::string::npos) << word;
}

TEST(Cli, UsageErrorsExit64) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  const auto unknown = cli({"gradcheck", "--bogus"});
  EXPECT_EQ(unknown.code, kExitUsage);
  EXPECT_NE(unknown.err.find("--bogus"), std::string::npos);
  EXPECT_EQ(cli({"extract", "--out", "x"}).code, kExitUsage);
  EXPECT_EQ(cli({"--set", "frontend.nope=1", "gradcheck", "--only", "add"}).code, kExitUsage);
  EXPECT_EQ(cli({"--set", "train.epochs=many", "gradcheck", "--only", "add"}).code, kExitUsage);
  EXPECT_EQ(cli({"--set", "frontend.q_min=9", "dump-qtrace", "missing.wav"}).code, kExitUsage);
}

TEST(Cli, GradcheckPassesAndNamesInjectedFault) {
  const auto ok = cli({"gradcheck"});
  EXPECT_EQ(ok.code, kExitOk) << ok.out;
  const auto rows = csv_rows(ok.out);
  ASSERT_GT(rows.size(), 1u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"op", "max_rel_error", "probes", "status"}));
  EXPECT_EQ(rows.size(), 1 + grad::registered_ops().size() + std::size(grad::kFrontendCases));
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i][3], "ok") << rows[i][0];

  const auto bad = cli({"gradcheck", "--inject-fault", "tanh"});
  EXPECT_EQ(bad.code, kExitCheckFailed);
  EXPECT_NE(bad.err.find("gradient check failed: tanh"), std::string::npos);
  EXPECT_EQ(bad.err.find("gradient check failed: add"), std::string::npos);
  EXPECT_TRUE(grad::injected_fault().empty());
}

TEST(Cli, ExtractWritesFeaturesAndConfig) {
  testing::ScratchDir tmp("cli_extract");
  const auto a = tmp.path() / "a.wav", b = tmp.path() / "b.wav";
  write_file_bytes(a, encode_wav(testing::wave(testing::sine(440.0, 16000, 0.5))));
  write_file_bytes(b, encode_wav(testing::wave(testing::sine(2000.0, 8000, 0.1))));
  const auto out = tmp.path() / "out";
  const auto r = cli({"extract", a.string(), b.string(), "--out", out.string(), "--csv"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto fa = decode_features(read_file_bytes(out / "a.adft"));
  EXPECT_EQ(fa.size(), 91u);
  EXPECT_EQ(fa[0].flatten().size(), 234u);
  EXPECT_EQ(decode_features(read_file_bytes(out / "b.adft")).size(), 46u);
  EXPECT_TRUE(fs::exists(out / "a.csv"));
  EXPECT_NE(slurp(out / "config.txt").find("frontend.n_filters = 40"), std::string::npos);
  EXPECT_FALSE(fs::exists(out / "errors.log"));

  const auto again = tmp.path() / "again";
  ASSERT_EQ(cli({"extract", a.string(), b.string(), "--out", again.string()}).code, kExitOk);
  EXPECT_EQ(read_file_bytes(out / "a.adft"), read_file_bytes(again / "a.adft"));
  EXPECT_EQ(read_file_bytes(out / "b.adft"), read_file_bytes(again / "b.adft"));
}

TEST(Cli, ExtractReportsPartialFailure) {
  testing::ScratchDir tmp("cli_extract_partial");
  const auto good = tmp.path() / "good.wav", bad = tmp.path() / "bad.wav";
  write_file_bytes(good, encode_wav(testing::wave(testing::sine(440.0, 4000, 0.5))));
  write_file_bytes(bad, std::vector<std::uint8_t>{'R', 'I', 'F', 'F', 0, 0});
  const auto out = tmp.path() / "out";
  const auto r = cli({"extract", good.string(), bad.string(), (tmp.path() / "missing.wav").string(), "--out",
                      out.string()});
  EXPECT_EQ(r.code, kExitPartial);
  EXPECT_TRUE(fs::exists(out / "good.adft"));
  const std::string log = slurp(out / "errors.log");
  EXPECT_NE(log.find("bad.wav"), std::string::npos);
  EXPECT_NE(log.find("missing.wav"), std::string::npos);
  EXPECT_EQ(log.find("good.wav"), std::string::npos);
  EXPECT_NE(r.err.find("bad.wav"), std::string::npos);
}

TEST(Cli, DumpFiltersPeaksScaleWithQ) {
  const auto r = cli({"dump-filters"});
  ASSERT_EQ(r.code, kExitOk);
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 1026u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"freq_hz", "magnitude_q1.5", "magnitude_q2", "magnitude_q2.5"}));
  std::vector<double> peak(3, 0.0);
  for (std::size_t i = 1; i < rows.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) peak[c] = std::max(peak[c], std::stod(rows[i][c + 1]));
  EXPECT_NEAR(peak[1] / peak[0], 2.0 / 1.5, 0.01 * 2.0 / 1.5);
  EXPECT_NEAR(peak[2] / peak[0], 2.5 / 1.5, 0.01 * 2.5 / 1.5);
  EXPECT_DOUBLE_EQ(std::stod(rows.back()[0]), 8000.0);

  const auto norm = cli({"dump-filters", "--normalize", "--q", "3", "--points", "2001"});
  const auto nrows = csv_rows(norm.out);
  EXPECT_EQ(nrows[0][1], "magnitude");
  // 3000 Hz sits on grid point 750 of 2001.
  EXPECT_NEAR(std::stod(nrows[1 + 750][1]), 1.0, 1e-5);
}

TEST(Cli, DumpFiltersWritesFilesAndTaps) {
  testing::ScratchDir tmp("cli_filters");
  const auto csv = tmp.path() / "resp.csv", taps = tmp.path() / "taps.csv";
  ASSERT_EQ(cli({"dump-filters", "--out", csv.string(), "--taps-out", taps.string(), "--taps", "64"}).code, kExitOk);
  EXPECT_TRUE(fs::exists(tmp.path() / "resp.csv.config.txt"));
  EXPECT_EQ(csv_rows(slurp(taps)).size(), 65u);
  EXPECT_EQ(cli({"dump-filters", "--q", "0"}).code, kExitCheckFailed);
}

TEST(Cli, DumpQtraceOnSilenceIsFlat) {
  testing::ScratchDir tmp("cli_qtrace");
  const auto silent = tmp.path() / "silent.wav";
  write_file_bytes(silent, encode_wav(testing::wave(std::vector<float>(16000, 0.0f))));
  const auto r = cli({"dump-qtrace", silent.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 1 + 91u * 39u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"frame_index", "channel", "q_value", "energy_db"}));
  for (std::size_t c = 0; c < 39; ++c) {
    EXPECT_EQ(std::stod(rows[1 + c][2]), 2.0);
    const std::string settled = rows[1 + 39 + c][2];
    for (std::size_t t = 2; t < 91; ++t) ASSERT_EQ(rows[1 + t * 39 + c][2], settled);
  }
}

TEST(Cli, SynthTaskIsDeterministic) {
  testing::ScratchDir tmp("cli_synth");
  const auto a = tmp.path() / "a", b = tmp.path() / "b", c = tmp.path() / "c";
  const std::vector<std::string> small = {"--set", "task.n_train=8", "task.n_valid=8", "task.n_test=8"};
  auto args = [&](const fs::path& dir, const char* seed) {
    std::vector<std::string> v = small;
    v.insert(v.end(), {"--seed", seed, "synth-task", "--out", dir.string(), "--wav"});
    return v;
  };
  ASSERT_EQ(cli(args(a, "5")).code, kExitOk);
  ASSERT_EQ(cli(args(b, "5")).code, kExitOk);
  ASSERT_EQ(cli(args(c, "6")).code, kExitOk);
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  EXPECT_NE(slurp(a / "manifest.json"), slurp(c / "manifest.json"));
  std::size_t wavs = 0;
  for (const auto& e : fs::directory_iterator(a / "wav")) {
    ++wavs;
    EXPECT_EQ(read_file_bytes(e.path()), read_file_bytes(b / "wav" / e.path().filename()));
  }
  EXPECT_EQ(wavs, 24u);
  EXPECT_NE(slurp(a / "config.txt").find("seed = 5"), std::string::npos);
}

TEST(Cli, ConfigFileAndOverridesCompose) {
  testing::ScratchDir tmp("cli_config");
  const auto cfg = tmp.path() / "run.cfg";
  detail::write_text(cfg, "# comment\nseed = 3\ntask.n_train = 8\ntask.n_valid=8\n\ntask.n_test = 8\n");
  const auto out = tmp.path() / "out";
  ASSERT_EQ(cli({"--config", cfg.string(), "--set", "task.kind=noisy_vowels", "--seed", "9", "synth-task", "--out",
                 out.string()})
                .code,
            kExitOk);
  const std::string echo = slurp(out / "config.txt");
  EXPECT_NE(echo.find("seed = 9"), std::string::npos);
  EXPECT_NE(echo.find("task.n_train = 8"), std::string::npos);
  EXPECT_NE(echo.find("task.kind = noisy_vowels"), std::string::npos);

  RunConfig parsed;
  std::istringstream in(echo);
  read_config(in, parsed);
  EXPECT_EQ(config_text(parsed), echo);

  detail::write_text(cfg, "train.epochs = 2\ntrain.colour = red\n");
  const auto bad = cli({"--config", cfg.string(), "gradcheck", "--only", "add"});
  EXPECT_EQ(bad.code, kExitUsage);
  EXPECT_NE(bad.err.find("line 2"), std::string::npos);
  EXPECT_NE(bad.err.find("train.colour"), std::string::npos);
  EXPECT_EQ(cli({"--config", (tmp.path() / "none.cfg").string(), "gradcheck"}).code, kExitUsage);
}

TEST(Cli, TrainEvalRoundTripIsReproducible) {
  testing::ScratchDir tmp("cli_train");
  const auto a = tmp.path() / "a", b = tmp.path() / "b";
  ASSERT_EQ(cli(with_tiny({"--seed", "4", "train", "--out", a.string(), "--quiet"})).code, kExitOk);
  ASSERT_EQ(cli(with_tiny({"--seed", "4", "train", "--out", b.string(), "--quiet"})).code, kExitOk);
  for (const char* f : {"model.adfp", "report.json", "results.csv", "config.txt"})
    EXPECT_EQ(read_file_bytes(a / f), read_file_bytes(b / f)) << f;

  const auto ev = cli(with_tiny({"--seed", "4", "eval", "--params", (a / "model.adfp").string()}));
  ASSERT_EQ(ev.code, kExitOk) << ev.err;
  const auto j = nlohmann::json::parse(ev.out);
  const auto trained = nlohmann::json::parse(slurp(a / "report.json"));
  EXPECT_EQ(j["top1"], trained["top1"]);
  EXPECT_EQ(j["variant"], "ada_fe");
}

TEST(Cli, AblateTabulatesEveryRun) {
  testing::ScratchDir tmp("cli_ablate");
  const auto out = tmp.path() / "abl";
  const auto r = cli(with_tiny({"ablate", "--out", out.string(), "--seeds", "1,2",
                                "--variants", "ada_fe,frozen_q_baseline", "--quiet"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto results = csv_rows(slurp(out / "results.csv"));
  EXPECT_EQ(results.size(), 5u);
  const auto table = csv_rows(slurp(out / "ablation.csv"));
  ASSERT_EQ(table.size(), 3u);
  EXPECT_EQ(table[1][0], "ada_fe");
  EXPECT_EQ(table[1][1], "2");
  EXPECT_EQ(table[2][0], "frozen_q_baseline");
  EXPECT_EQ(cli(with_tiny({"ablate", "--out", out.string(), "--variants", "fancy"})).code, kExitUsage);
}

}  // namespace
}  // namespace adafe::cli
