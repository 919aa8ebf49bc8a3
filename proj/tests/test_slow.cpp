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


// Full-size training runs. Registered under the "slow" label.

#include "adafe/train/synth_tasks.hpp"
#include "adafe/train/trainer.hpp"
#include "test_util.hpp"

namespace adafe::train {
namespace {

TEST(SlowTrain, FrozenBaselineLearnsLoudnessTones) {
  const auto task = gen_synthetic_task(TaskKind::kLoudnessTones, 11);
  TrainConfig c;
  c.variant = Variant::kFrozenQBaseline;
  const auto r = train(task, c, FrontendConfig{});
  EXPECT_GE(r.report.top1, 0.60);
  EXPECT_TRUE(r.disconnected.empty());
}

TEST(SlowTrain, OneEpochLowersTrainingLoss) {
  const auto task = gen_synthetic_task(TaskKind::kLoudnessTones, 12);
  TrainConfig c;
  c.epochs = 1;
  const auto r = train(task, c, FrontendConfig{});
  ASSERT_EQ(r.report.curve.size(), 1u);
  EXPECT_LT(r.report.curve[0].train_loss, r.initial_train_loss);
  EXPECT_TRUE(r.disconnected.empty());
}

// Over a wider level range the adaptive front-end should not lose to the
// fixed-Q baseline, and its Q should move against channel energy.
TEST(SlowTrain, AdaptationHelpsOnWideLevelRange) {
  TaskOptions o;
  o.level_lo_db = -60.0;
  const auto task = gen_synthetic_task(TaskKind::kLoudnessTones, 13, o);
  double ada = 0.0, frozen = 0.0;
  std::size_t negative_majority = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig c;
    c.seed = seed;
    c.epochs = 5;
    c.variant = Variant::kAdaFe;
    const auto a = train(task, c, FrontendConfig{});
    c.variant = Variant::kFrozenQBaseline;
    c.epochs = 30;
    const auto f = train(task, c, FrontendConfig{});
    ada += a.report.top1 / 3.0;
    frozen += f.report.top1 / 3.0;
    if (a.report.q_energy_negative_fraction > 0.5) ++negative_majority;
  }
  EXPECT_GE(ada, frozen - 0.01);
  EXPECT_EQ(negative_majority, 3u);
}

}  // namespace
}  // namespace adafe::train
