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


// Runs the adaptive front-end over a tone whose level ramps from -60 dB to
// 0 dB and prints how the mean Q of the tone's channels moves against the
// input level.
//
//   ./adafe_sample_level_ramp [seconds]

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>

#include "adafe/frontend.hpp"

int main(int argc, char** argv) {
  const double seconds = argc > 1 ? std::atof(argv[1]) : 2.0;
  const double tone_hz = 1000.0;

  adafe::Waveform w;
  w.source_id = "level_ramp";
  const auto n = static_cast<std::size_t>(seconds * adafe::kTargetRate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double level_db = -60.0 + 60.0 * static_cast<double>(i) / static_cast<double>(n);
    const double amp = std::pow(10.0, level_db / 20.0);
    w.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * tone_hz * i / adafe::kTargetRate));
  }

  adafe::FrontendConfig cfg;  // N = 40, k = 1, P = 150, 11 ms frames, LDA on
  adafe::grad::ParamStore<float> afc;
  adafe::init_afc_params(afc, cfg, /*seed=*/1);
  adafe::Frontend<float> fe(cfg, &afc);
  const auto res = fe.run_utterance(w);

  // Adaptive channels whose center lies within 300 Hz of the tone.
  const auto centers = cfg.adaptive_centers();
  std::vector<std::size_t> near;
  for (std::size_t c = 0; c < centers.size(); ++c)
    if (std::abs(centers[c] - tone_hz) < 300.0) near.push_back(c);

  std::printf("frame  energy_db  mean_q\n");
  const auto& tr = res.trace;
  for (std::size_t t = 0; t < tr.frames; t += 10) {
    double e = 0.0, q = 0.0;
    for (std::size_t c : near) {
      e += tr.energy_at(t, c);
      q += tr.q_at(t, c);
    }
    std::printf("%5zu  %9.2f  %6.3f\n", t, e / near.size(), q / near.size());
  }
  std::printf("%zu frames, %zu channels, %zu features per frame\n", tr.frames, tr.channels,
              res.features.front().flatten().size());
  return 0;
}
