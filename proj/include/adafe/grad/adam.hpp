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

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "adafe/error.hpp"
#include "adafe/grad/params.hpp"

namespace adafe::grad {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double weight_decay = 1e-4;
};

template <class T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  std::int64_t step_count = 0;
};

// Bias-corrected Adam with decoupled weight decay:
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
// grads is indexed like the store; entries for frozen params are ignored and
// an empty entry means "no gradient this step".
template <class T>
void adam_step(ParamStore<T>& params, const std::vector<std::vector<T>>& grads, AdamState<T>& st,
               const AdamConfig& cfg) {
  require(grads.size() == params.size(), Errc::kShapeMismatch, "one gradient slot per param");
  if (st.m.empty()) {
    st.m.resize(params.size());
    st.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.m[i].assign(params[i].value.size(), T(0));
      st.v[i].assign(params[i].value.size(), T(0));
    }
  }
  require(st.m.size() == params.size(), Errc::kShapeMismatch, "Adam state belongs to another store");
  ++st.step_count;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable || grads[i].empty()) continue;
    require(grads[i].size() == p.value.size(), Errc::kShapeMismatch, [&] { return "gradient size for " + p.name; });
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = grads[i][j];
      const double mj = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      const double vj = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + cfg.eps) + cfg.weight_decay * p.value[j];
      p.value[j] = static_cast<T>(p.value[j] - cfg.lr * update);
    }
  }
}

}  // namespace adafe::grad
