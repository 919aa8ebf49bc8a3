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


#include <map>

#include "adafe/grad/params.hpp"
#include "adafe/train/model.hpp"
#include "adafe/train/synth_tasks.hpp"
#include "adafe/train/trainer.hpp"
#include "test_util.hpp"

namespace adafe::train {
namespace {

TaskOptions tiny(std::size_t per_split = 16) {
  TaskOptions o;
  o.n_train = per_split;
  o.n_valid = per_split / 2;
  o.n_test = per_split / 2;
  return o;
}

TrainConfig quick(Variant v, std::size_t epochs = 1) {
  TrainConfig c;
  c.variant = v;
  c.epochs = epochs;
  return c;
}

TEST(SyntheticTask, DeterministicPerSeed) {
  const auto a = gen_synthetic_task(TaskKind::kLoudnessTones, 7, tiny());
  const auto b = gen_synthetic_task(TaskKind::kLoudnessTones, 7, tiny());
  const auto c = gen_synthetic_task(TaskKind::kLoudnessTones, 8, tiny());
  ASSERT_EQ(a.clips.size(), b.clips.size());
  for (std::size_t i = 0; i < a.clips.size(); ++i) {
    EXPECT_EQ(a.clips[i].audio.samples, b.clips[i].audio.samples);
    EXPECT_EQ(a.clips[i].label, b.clips[i].label);
  }
  EXPECT_NE(a.clips[0].audio.samples, c.clips[0].audio.samples);
  EXPECT_EQ(task_manifest(a).dump(), task_manifest(b).dump());
}

TEST(SyntheticTask, DefaultSplitsAreClassBalanced) {
  const auto t = gen_synthetic_task(TaskKind::kLoudnessTones, 1);
  EXPECT_EQ(t.num_classes(), 8u);
  const std::map<Split, std::size_t> expect = {{Split::kTrain, 600}, {Split::kValid, 96}, {Split::kTest, 96}};
  for (auto [split, n] : expect) {
    const auto idx = t.indices(split);
    ASSERT_EQ(idx.size(), n);
    std::vector<std::size_t> per(8, 0);
    for (std::size_t i : idx) ++per[t.clips[i].label];
    for (std::size_t k : per) EXPECT_EQ(k, n / 8);
  }
}

TEST(SyntheticTask, PeakLevelsFollowOptions) {
  TaskOptions o = tiny(32);
  o.level_lo_db = -60.0;
  o.level_hi_db = -10.0;
  const auto t = gen_synthetic_task(TaskKind::kLoudnessTones, 2, o);
  double lo = 0.0, hi = -200.0;
  for (const auto& c : t.clips) {
    const double p = peak_db(c.audio);
    lo = std::min(lo, p);
    hi = std::max(hi, p);
    ASSERT_GE(p, -60.0 - 1e-3);
    ASSERT_LE(p, -10.0 + 1e-3);
    ASSERT_EQ(c.audio.samples.size(), 16000u);
  }
  EXPECT_LT(lo, -45.0);
  EXPECT_GT(hi, -25.0);
}

TEST(SyntheticTask, ClassInventories) {
  EXPECT_EQ(gen_synthetic_task(TaskKind::kChirpClasses, 0, tiny(10)).num_classes(), 5u);
  EXPECT_EQ(gen_synthetic_task(TaskKind::kNoisyVowels, 0, tiny(8)).num_classes(), 4u);
  EXPECT_EQ(parse_task_kind("noisy_vowels"), TaskKind::kNoisyVowels);
  EXPECT_THROW(parse_task_kind("speech"), Error);
}

TEST(SyntheticTask, RejectsTooSmallSplits) {
  TaskOptions o = tiny();
  o.n_valid = 7;
  try {
    gen_synthetic_task(TaskKind::kLoudnessTones, 0, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kTaskTooSmall);
  }
}

TEST(SyntheticTask, LeakedClipIsDetected) {
  auto t = gen_synthetic_task(TaskKind::kNoisyVowels, 3, tiny(8));
  EXPECT_NO_THROW(assert_disjoint_splits(t));
  const auto test_idx = t.indices(Split::kTest);
  t.clips[test_idx[0]].audio.samples = t.clips[t.indices(Split::kTrain)[1]].audio.samples;
  try {
    check_task(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDataLeak);
  }
}

TEST(Metrics, ConstantPredictionScoresChance) {
  const std::size_t K = 8;
  std::vector<int> labels;
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 8; ++k) labels.push_back(k);
  std::vector<double> logits(labels.size() * K, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) logits[i * K] = 1.0;
  EXPECT_DOUBLE_EQ(topk_accuracy(logits, K, labels, 1), 1.0 / 8.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(logits, K, labels, 5), 5.0 / 8.0);
  // All-equal logits rank lower class indices first.
  std::fill(logits.begin(), logits.end(), 0.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(logits, K, labels, 1), 1.0 / 8.0);
}

TEST(Metrics, TopFiveNeverBelowTopOne) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> labels(20);
    std::vector<double> logits(20 * 8);
    for (auto& l : labels) l = static_cast<int>(rng.below(8));
    for (auto& v : logits) v = rng.uniform(-1, 1);
    ASSERT_GE(topk_accuracy(logits, 8, labels, 5), topk_accuracy(logits, 8, labels, 1));
  }
}

TEST(Metrics, PearsonAndMedian) {
  const std::vector<double> x = {1, 2, 3, 4, 5}, y = {2, 4, 6, 8, 10}, z = {5, 4, 3, 2, 1};
  EXPECT_NEAR(pearson(x, y), 1.0, 1e-12);
  EXPECT_NEAR(pearson(x, z), -1.0, 1e-12);
  EXPECT_TRUE(std::isnan(pearson(x, std::vector<double>(5, 2.0))));
  const std::vector<double> u = {1, 0, 1, 0}, w = {1, 1, 0, 0};
  EXPECT_NEAR(pearson(u, w), 0.0, 1e-12);
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, std::nan(""), 2.0, 3.0}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}

TEST(Segments, CropPadsShortClipsAndStaysInsideLongOnes) {
  const auto w = testing::wave(testing::sine(300.0, 10000, 0.5));
  const auto c = crop_frames(w, 1.0, 11.0, nullptr);
  EXPECT_EQ(c.num_frames, 91u);
  EXPECT_EQ(c.valid_samples, 16000u);
  EXPECT_EQ(c.data[12000], 0.0f);
  std::vector<float> ramp(40000);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<float>(i) / 40000.0f;
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto k = crop_frames(testing::wave(ramp), 1.0, 11.0, &rng);
    const std::size_t off = static_cast<std::size_t>(std::lround(k.data[0] * 40000.0f));
    ASSERT_LE(off + 16000, ramp.size());
    ASSERT_EQ(k.data[15999], ramp[off + 15999]);
  }
}

TEST(Segments, OneSecondClipIsOneSegment) {
  const auto w = testing::wave(testing::sine(300.0, 16000, 0.5));
  const auto s = eval_segments(w, 1.0, 11.0);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].data, frame_signal(w).data);
  EXPECT_EQ(eval_segments(testing::wave(testing::sine(300.0, 40000)), 1.0, 11.0).size(), 2u);
  EXPECT_EQ(eval_segments(testing::wave(testing::sine(300.0, 5000)), 1.0, 11.0).size(), 1u);
}

TEST(Evaluation, LongClipLogitsAverageSegments) {
  TaskOptions o = tiny(16);
  o.clip_seconds = 2.0;
  const auto task = gen_synthetic_task(TaskKind::kLoudnessTones, 4, o);
  const FrontendConfig fcfg = apply_variant(FrontendConfig{}, Variant::kAdaFe);
  auto store = init_model_params<float>(fcfg, task.num_classes(), 5);
  const auto idx = task.indices(Split::kTest);
  const auto out = infer_clips(task, {idx[0]}, store, fcfg, 1.0, false);
  const auto segs = eval_segments(task.clips[idx[0]].audio, 1.0, 11.0);
  ASSERT_EQ(segs.size(), 2u);
  std::vector<double> mean(8, 0.0);
  for (const auto& s : segs) {
    Frontend<float> fe(fcfg, &store);
    const auto d = pool_features(fe.run_frames(s).features);
    const std::vector<float> df(d.begin(), d.end());
    const auto logits = classify<float>(store, df, 1);
    for (std::size_t k = 0; k < 8; ++k) mean[k] += logits[k] / 2.0;
  }
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(out.logits[k], mean[k], 1e-5);
}

TEST(Aggregate, OneRowPerVariantWithSampleStd) {
  std::vector<EvalReport> rows;
  for (Variant v : kAllVariants)
    for (std::uint64_t s : {0, 1, 2}) {
      EvalReport r;
      r.variant = std::string(variant_name(v));
      r.seed = s;
      r.top1 = 0.5 + 0.1 * static_cast<double>(s);
      r.top5 = 0.9;
      rows.push_back(r);
    }
  const auto agg = aggregate(rows);
  ASSERT_EQ(agg.size(), 6u);
  for (const auto& a : agg) {
    EXPECT_EQ(a.runs, 3u);
    EXPECT_NEAR(a.top1_mean, 0.6, 1e-12);
    EXPECT_NEAR(a.top1_std, 0.1, 1e-12);
    EXPECT_NEAR(*a.top5_std, 0.0, 1e-12);
  }
  std::ostringstream os;
  write_ablation_table(os, rows);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "variant,runs,top1_mean,top1_std,top5_mean,top5_std");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 7);
  EXPECT_NE(s.find("ada_fe,3,0.600000,0.100000,0.900000,0.000000"), std::string::npos);
}

TEST(Variants, NamesRoundTripAndWidths) {
  for (Variant v : kAllVariants) EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_THROW(parse_variant("ada"), Error);
  for (Variant v : kAllVariants) EXPECT_EQ(descriptor_width(apply_variant(FrontendConfig{}, v)), 234u);
  const auto frozen = apply_variant(FrontendConfig{}, Variant::kFrozenQBaseline);
  EXPECT_FALSE(frozen.afc_enabled);
  EXPECT_FALSE(frozen.lda_enabled);
  EXPECT_EQ(apply_variant(FrontendConfig{}, Variant::kAdaFeSEgFm).afc_input_width(), 78u);
}

TEST(Train, EveryVariantWiresAllParameters) {
  const auto task = gen_synthetic_task(TaskKind::kLoudnessTones, 5, tiny(16));
  for (Variant v : kAllVariants) {
    const auto r = train(task, quick(v), FrontendConfig{});
    EXPECT_TRUE(r.disconnected.empty()) << variant_name(v) << " " << r.disconnected.size();
    EXPECT_EQ(r.report.variant, variant_name(v));
    bool has_afc = false;
    for (const auto& p : r.params) {
      EXPECT_TRUE(p.name.starts_with("afc.") || p.name.starts_with("clf.")) << p.name;
      has_afc = has_afc || p.name.starts_with("afc.");
    }
    EXPECT_EQ(has_afc, v != Variant::kFrozenQBaseline);
  }
}

TEST(Train, LevelRuleOffLeavesOnlyController) {
  const auto task = gen_synthetic_task(TaskKind::kLoudnessTones, 5, tiny(16));
  auto r = train(task, quick(Variant::kAdaFeSFm), FrontendConfig{});
  EXPECT_FALSE(r.frontend.lda_enabled);
  Frontend<float> fe(r.frontend, &r.params);
  auto st = fe.initial_state();
  const auto frames = frame_signal(task.clips[0].audio);
  for (std::size_t t = 0; t < 5; ++t)
    for (double qe : fe.step_frame(frames.frame(t), st).q_e) ASSERT_EQ(qe, 0.0);
}

TEST(Train, RepeatRunsAreIdentical) {
  const auto task = gen_synthetic_task(TaskKind::kChirpClasses, 6, tiny(10));
  TrainConfig c = quick(Variant::kAdaFe, 2);
  c.seed = 3;
  const auto a = train(task, c, FrontendConfig{});
  const auto b = train(task, c, FrontendConfig{});
  EXPECT_EQ(grad::encode_checkpoint(a.params), grad::encode_checkpoint(b.params));
  EXPECT_EQ(report_json(a.report).dump(), report_json(b.report).dump());
  ASSERT_TRUE(a.report.top5.has_value());
  EXPECT_GE(*a.report.top5, a.report.top1);
}

TEST(Train, RejectsBadConfig) {
  const auto task = gen_synthetic_task(TaskKind::kNoisyVowels, 5, tiny(8));
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(train(task, c, FrontendConfig{}), Error);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(train(task, c, FrontendConfig{}), Error);
}

}  // namespace
}  // namespace adafe::train
