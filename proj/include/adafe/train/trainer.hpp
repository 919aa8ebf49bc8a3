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

// Joint training of controller and classifier, whole-clip evaluation and
// the variant x seed ablation harness.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "adafe/audio_io.hpp"
#include "adafe/error.hpp"
#include "adafe/frontend.hpp"
#include "adafe/grad/adam.hpp"
#include "adafe/grad/ops.hpp"
#include "adafe/grad/params.hpp"
#include "adafe/parallel.hpp"
#include "adafe/rng.hpp"
#include "adafe/train/model.hpp"
#include "adafe/train/synth_tasks.hpp"

namespace adafe::train {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t patience = 15;
  std::size_t batch_size = 8;
  double clip_seconds = 1.0;
  std::uint64_t seed = 0;
  std::size_t bptt_window = 8;
  std::size_t hidden = 128;
  Variant variant = Variant::kAdaFe;
  bool stop_when_perfect = true;  // stop once validation top-1 reaches 1
  grad::AdamConfig adam{3e-3, 0.9, 0.98, 1e-9, 1e-4};
};

struct EpochStat {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_top1 = 0.0;
};

struct EvalReport {
  std::string variant;
  std::uint64_t seed = 0;
  double top1 = 0.0;
  std::optional<double> top5;  // only with at least five classes
  std::size_t epochs = 0;
  std::vector<EpochStat> curve;
  double q_energy_corr_median = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> q_energy_corr_channel;  // median over clips, NaN when undefined
  double q_energy_negative_fraction = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::uint64_t> test_hashes;
};

// ---- clip slicing ----

// One training crop of clip_seconds: a random offset when the clip is
// longer, zero padding when it is shorter.
inline FrameSequence crop_frames(const Waveform& w, double clip_seconds, double frame_ms, Rng* rng) {
  const std::size_t n = static_cast<std::size_t>(std::llround(clip_seconds * w.sample_rate));
  Waveform c;
  c.sample_rate = w.sample_rate;
  c.source_id = w.source_id;
  std::size_t off = 0;
  if (rng && w.samples.size() > n) off = static_cast<std::size_t>(rng->below(w.samples.size() - n + 1));
  c.samples.assign(n, 0.0f);
  const std::size_t take = std::min(n, w.samples.size() - off);
  std::copy_n(w.samples.begin() + static_cast<std::ptrdiff_t>(off), take, c.samples.begin());
  return frame_signal(c, frame_ms);
}

// Consecutive non-overlapping segments of clip_seconds; a trailing partial
// segment is dropped unless it is the only one.
inline std::vector<FrameSequence> eval_segments(const Waveform& w, double clip_seconds, double frame_ms) {
  const std::size_t n = static_cast<std::size_t>(std::llround(clip_seconds * w.sample_rate));
  std::vector<FrameSequence> out;
  for (std::size_t off = 0; off + n <= w.samples.size(); off += n) {
    Waveform s;
    s.sample_rate = w.sample_rate;
    s.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(off),
                     w.samples.begin() + static_cast<std::ptrdiff_t>(off + n));
    out.push_back(frame_signal(s, frame_ms));
  }
  if (out.empty()) out.push_back(frame_signal(w, frame_ms));
  return out;
}

// ---- metrics ----

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  // Series that are constant to rounding carry no correlation.
  const double tiny = 1e-24 * n;
  if (sxx <= tiny || syy <= tiny) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

// Per-channel correlation between the energy of frame t and the Q of frame
// t + 1 (the Q that energy produced).
inline std::vector<double> q_energy_lagged_corr(const QTrace& tr) {
  std::vector<double> out(tr.channels, std::numeric_limits<double>::quiet_NaN());
  if (tr.frames < 3) return out;
  std::vector<double> e(tr.frames - 1), q(tr.frames - 1);
  for (std::size_t c = 0; c < tr.channels; ++c) {
    for (std::size_t t = 0; t + 1 < tr.frames; ++t) {
      e[t] = tr.energy_at(t, c);
      q[t] = tr.q_at(t + 1, c);
    }
    out[c] = pearson(e, q);
  }
  return out;
}

inline double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Fraction of rows whose label is among the k largest logits (ties broken
// toward the lower class index).
inline double topk_accuracy(std::span<const double> logits, std::size_t classes, std::span<const int> labels,
                            std::size_t k) {
  require(logits.size() == labels.size() * classes, Errc::kShapeMismatch, "logit block");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = logits.data() + i * classes;
    const double own = row[labels[i]];
    std::size_t rank = 0;
    for (std::size_t c = 0; c < classes; ++c)
      if (row[c] > own || (row[c] == own && static_cast<int>(c) < labels[i])) ++rank;
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// ---- evaluation ----

struct ClipOutputs {
  std::vector<double> logits;  // n x classes, averaged over segments
  std::vector<QTrace> traces;  // one per clip (first segment), when requested
};

// Whole-clip inference through the streaming front-end: logits averaged over
// consecutive segments.
inline ClipOutputs infer_clips(const ToyTask& task, const std::vector<std::size_t>& idx,
                               grad::ParamStore<float>& store, const FrontendConfig& fcfg,
                               double clip_seconds, bool keep_traces) {
  const std::size_t K = task.num_classes(), D = descriptor_width(fcfg);
  std::vector<std::vector<std::vector<float>>> desc(idx.size());
  std::vector<QTrace> traces(keep_traces ? idx.size() : 0);
  parallel_for(idx.size(), [&](std::size_t i) {
    Frontend<float> fe(fcfg, fcfg.afc_enabled ? &store : nullptr);
    const auto segs = eval_segments(task.clips[idx[i]].audio, clip_seconds, fcfg.frame_len_ms);
    for (std::size_t s = 0; s < segs.size(); ++s) {
      auto r = fe.run_frames(segs[s]);
      const auto d = pool_features(r.features);
      desc[i].emplace_back(d.begin(), d.end());
      if (keep_traces && s == 0) traces[i] = std::move(r.trace);
    }
  });
  std::vector<float> flat;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (const auto& d : desc[i]) {
      flat.insert(flat.end(), d.begin(), d.end());
      owner.push_back(i);
    }
  require(flat.size() == owner.size() * D, Errc::kShapeMismatch, "descriptor width");
  const auto seg_logits = classify<float>(store, flat, owner.size());
  ClipOutputs out;
  out.logits.assign(idx.size() * K, 0.0);
  std::vector<std::size_t> count(idx.size(), 0);
  for (std::size_t s = 0; s < owner.size(); ++s) {
    ++count[owner[s]];
    for (std::size_t k = 0; k < K; ++k) out.logits[owner[s] * K + k] += seg_logits[s * K + k];
  }
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t k = 0; k < K; ++k) out.logits[i * K + k] /= static_cast<double>(count[i]);
  out.traces = std::move(traces);
  return out;
}

inline std::vector<int> labels_of(const ToyTask& task, const std::vector<std::size_t>& idx) {
  std::vector<int> y;
  for (std::size_t i : idx) y.push_back(task.clips[i].label);
  return y;
}

// Test-split report for trained params.
inline EvalReport evaluate(const ToyTask& task, grad::ParamStore<float>& store, const FrontendConfig& fcfg,
                           double clip_seconds = 1.0) {
  const auto idx = task.indices(Split::kTest);
  require(!idx.empty(), Errc::kTaskTooSmall, "empty test split");
  const auto out = infer_clips(task, idx, store, fcfg, clip_seconds, true);
  const auto y = labels_of(task, idx);
  const std::size_t K = task.num_classes();
  EvalReport r;
  r.top1 = topk_accuracy(out.logits, K, y, 1);
  if (K >= 5) r.top5 = topk_accuracy(out.logits, K, y, 5);
  const std::size_t A = fcfg.adaptive_channels();
  std::vector<std::vector<double>> per_channel(A);
  std::vector<double> all;
  for (const auto& tr : out.traces) {
    const auto c = q_energy_lagged_corr(tr);
    for (std::size_t ch = 0; ch < A; ++ch) {
      per_channel[ch].push_back(c[ch]);
      all.push_back(c[ch]);
    }
  }
  r.q_energy_corr_median = median(all);
  std::size_t neg = 0, defined = 0;
  for (std::size_t ch = 0; ch < A; ++ch) {
    r.q_energy_corr_channel.push_back(median(per_channel[ch]));
    if (!std::isnan(r.q_energy_corr_channel.back())) {
      ++defined;
      if (r.q_energy_corr_channel.back() < 0.0) ++neg;
    }
  }
  if (defined) r.q_energy_negative_fraction = static_cast<double>(neg) / defined;
  for (std::size_t i : idx) r.test_hashes.push_back(clip_hash(task.clips[i].audio));
  return r;
}

inline double split_top1(const ToyTask& task, Split s, grad::ParamStore<float>& store,
                         const FrontendConfig& fcfg, double clip_seconds) {
  const auto idx = task.indices(s);
  const auto out = infer_clips(task, idx, store, fcfg, clip_seconds, false);
  return topk_accuracy(out.logits, task.num_classes(), labels_of(task, idx), 1);
}

// ---- training ----

struct TrainResult {
  grad::ParamStore<float> params;
  FrontendConfig frontend;
  EvalReport report;
  std::vector<std::string> disconnected;  // trainable params that never received gradient
  double initial_train_loss = 0.0;
};

using ProgressFn = std::function<void(const EpochStat&)>;

inline void check_task(const ToyTask& task) {
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest})
    require(!task.indices(s).empty(), Errc::kTaskTooSmall, [&] { return std::string(split_name(s)) + " split is empty"; });
  assert_disjoint_splits(task);
}

namespace detail {

// Loss and gradients of one batch; frozen front-ends pass precomputed
// descriptors instead of frames.
struct BatchLoss {
  double loss = 0.0;
  std::vector<std::vector<float>> grads;
  std::vector<std::string> disconnected;
};

inline BatchLoss batch_loss(grad::ParamStore<float>& store, TapeFrontend<float>* fe,
                            const std::vector<const FrameSequence*>& frames, const std::vector<float>* desc,
                            const std::vector<int>& labels, std::size_t bptt, bool need_grad) {
  using namespace grad;
  Tape<float> tape;
  tape.release_intermediates = true;
  auto vars = store.bind(tape);
  Var<float> x;
  if (fe) {
    std::optional<AfcVars<float>> afc;
    if (fe->config().afc_enabled) afc = afc_vars(store, vars);
    x = pooled_descriptor(tape, *fe, frames, afc ? &*afc : nullptr, Mode::kTrain, bptt);
  } else {
    x = tape.constant({labels.size(), desc->size() / labels.size()}, *desc);
  }
  auto logits = classifier_graph(x, store, vars, Mode::kTrain);
  auto loss = softmax_cross_entropy(logits, std::span<const int>(labels));
  BatchLoss out;
  out.loss = loss.value()[0];
  if (!need_grad) return out;
  out.disconnected = tape.backward(loss).disconnected;
  for (std::size_t i = 0; i < store.size(); ++i)
    out.grads.push_back(store[i].trainable ? tape.grad(vars[i]) : std::vector<float>{});
  return out;
}

}  // namespace detail

inline TrainResult train(const ToyTask& task, const TrainConfig& tcfg, const FrontendConfig& base,
                         const ProgressFn& progress = {}) {
  check_task(task);
  require(tcfg.batch_size >= 1, Errc::kInvalidConfig, "batch_size must be at least 1");
  require(tcfg.epochs >= 1, Errc::kInvalidConfig, "epochs must be at least 1");
  const FrontendConfig fcfg = apply_variant(base, tcfg.variant);
  fcfg.validate();
  TrainResult res;
  res.frontend = fcfg;
  res.params = init_model_params<float>(fcfg, task.num_classes(), tcfg.seed, tcfg.hidden);
  auto& store = res.params;

  const auto train_idx = task.indices(Split::kTrain);
  const bool frozen = !fcfg.afc_enabled && !fcfg.lda_enabled;
  const std::size_t clip_len = static_cast<std::size_t>(std::llround(tcfg.clip_seconds * kTargetRate));
  bool fixed_crops = true;
  for (std::size_t i : train_idx) fixed_crops = fixed_crops && task.clips[i].audio.samples.size() <= clip_len;

  // A frozen front-end has no trainable state, so its descriptors are
  // computed once when crops are deterministic.
  std::vector<std::vector<float>> cached;
  auto descriptors_for = [&](const std::vector<FrameSequence>& crops) {
    std::vector<std::vector<float>> d(crops.size());
    parallel_for(crops.size(), [&](std::size_t i) {
      Frontend<float> fe(fcfg, nullptr);
      const auto p = pool_features(fe.run_frames(crops[i]).features);
      d[i].assign(p.begin(), p.end());
    });
    return d;
  };
  if (frozen && fixed_crops) {
    std::vector<FrameSequence> crops;
    for (std::size_t i : train_idx)
      crops.push_back(crop_frames(task.clips[i].audio, tcfg.clip_seconds, fcfg.frame_len_ms, nullptr));
    cached = descriptors_for(crops);
  }
  std::optional<TapeFrontend<float>> tfe;
  if (!frozen) tfe.emplace(fcfg);

  grad::AdamState<float> adam;
  grad::ParamStore<float> best = store;
  double best_valid = -1.0;
  std::size_t since_best = 0;
  Rng order_rng(mix_seed({tcfg.seed, 0x5eed}));

  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_idx.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      std::vector<int> labels;
      std::vector<FrameSequence> crops;
      std::vector<float> desc;
      for (std::size_t j = start; j < end; ++j) {
        const auto& clip = task.clips[train_idx[order[j]]];
        labels.push_back(clip.label);
        if (!cached.empty()) {
          desc.insert(desc.end(), cached[order[j]].begin(), cached[order[j]].end());
        } else {
          crops.push_back(crop_frames(clip.audio, tcfg.clip_seconds, fcfg.frame_len_ms, &order_rng));
        }
      }
      detail::BatchLoss bl;
      if (frozen && cached.empty()) {
        for (const auto& d : descriptors_for(crops)) desc.insert(desc.end(), d.begin(), d.end());
      }
      std::vector<const FrameSequence*> ptrs;
      for (const auto& c : crops) ptrs.push_back(&c);
      if (epoch == 1 && start == 0) {
        // Loss at initialisation on the first batch, without touching the
        // running statistics.
        auto probe = store;
        res.initial_train_loss =
            detail::batch_loss(probe, frozen ? nullptr : &*tfe, ptrs, &desc, labels, tcfg.bptt_window, false).loss;
      }
      bl = detail::batch_loss(store, frozen ? nullptr : &*tfe, ptrs, &desc, labels, tcfg.bptt_window, true);
      if (epoch == 1 && start == 0) res.disconnected = bl.disconnected;
      grad::adam_step(store, bl.grads, adam, tcfg.adam);
      loss_sum += bl.loss * static_cast<double>(labels.size());
      loss_n += labels.size();
    }
    EpochStat st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(loss_n);
    st.valid_top1 = split_top1(task, Split::kValid, store, fcfg, tcfg.clip_seconds);
    res.report.curve.push_back(st);
    if (progress) progress(st);
    if (st.valid_top1 > best_valid) {
      best_valid = st.valid_top1;
      best = store;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= tcfg.patience) break;
    if (tcfg.stop_when_perfect && st.valid_top1 >= 1.0) break;
  }
  store = best;
  EvalReport test = evaluate(task, store, fcfg, tcfg.clip_seconds);
  test.variant = std::string(variant_name(tcfg.variant));
  test.seed = tcfg.seed;
  test.epochs = res.report.curve.size();
  test.curve = std::move(res.report.curve);
  res.report = std::move(test);
  return res;
}

// ---- ablation ----

inline std::vector<EvalReport> ablation_matrix(const ToyTask& task, const std::vector<std::uint64_t>& seeds,
                                               const TrainConfig& tcfg, const FrontendConfig& base,
                                               const std::vector<Variant>& variants = {kAllVariants.begin(),
                                                                                       kAllVariants.end()},
                                               const std::function<void(const EvalReport&)>& done = {}) {
  require(!seeds.empty(), Errc::kInvalidConfig, "ablation needs at least one seed");
  std::vector<EvalReport> out;
  for (Variant v : variants) {
    for (std::uint64_t s : seeds) {
      TrainConfig c = tcfg;
      c.variant = v;
      c.seed = s;
      out.push_back(train(task, c, base).report);
      if (done) done(out.back());
    }
  }
  return out;
}

inline std::string fmt_metric(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

inline void write_results_csv(std::ostream& os, const std::vector<EvalReport>& rows) {
  os << "variant,seed,top1,top5,epochs,q_energy_corr_median\n";
  for (const auto& r : rows) {
    os << r.variant << ',' << r.seed << ',' << fmt_metric(r.top1) << ','
       << (r.top5 ? fmt_metric(*r.top5) : "") << ',' << r.epochs << ',' << fmt_metric(r.q_energy_corr_median)
       << '\n';
  }
}

struct AggregateRow {
  std::string variant;
  std::size_t runs = 0;
  double top1_mean = 0, top1_std = 0;
  std::optional<double> top5_mean, top5_std;
};

inline std::vector<AggregateRow> aggregate(const std::vector<EvalReport>& rows) {
  std::vector<AggregateRow> out;
  std::map<std::string, std::size_t> at;
  std::vector<std::vector<double>> t1, t5;
  for (const auto& r : rows) {
    auto [it, fresh] = at.emplace(r.variant, out.size());
    if (fresh) {
      out.push_back({r.variant, 0, 0.0, 0.0, std::nullopt, std::nullopt});
      t1.emplace_back();
      t5.emplace_back();
    }
    t1[it->second].push_back(r.top1);
    if (r.top5) t5[it->second].push_back(*r.top5);
  }
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= v.size();
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, v.size() > 1 ? std::sqrt(s / (v.size() - 1)) : 0.0};
  };
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].runs = t1[i].size();
    std::tie(out[i].top1_mean, out[i].top1_std) = mean_std(t1[i]);
    if (!t5[i].empty()) {
      auto [m, s] = mean_std(t5[i]);
      out[i].top5_mean = m;
      out[i].top5_std = s;
    }
  }
  return out;
}

// Mean and sample standard deviation per variant, one row per variant.
inline void write_ablation_table(std::ostream& os, const std::vector<EvalReport>& rows) {
  os << "variant,runs,top1_mean,top1_std,top5_mean,top5_std\n";
  for (const auto& a : aggregate(rows)) {
    os << a.variant << ',' << a.runs << ',' << fmt_metric(a.top1_mean) << ',' << fmt_metric(a.top1_std) << ','
       << (a.top5_mean ? fmt_metric(*a.top5_mean) : "") << ',' << (a.top5_std ? fmt_metric(*a.top5_std) : "")
       << '\n';
  }
}

inline nlohmann::ordered_json report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["variant"] = r.variant;
  j["seed"] = r.seed;
  j["top1"] = r.top1;
  if (r.top5) j["top5"] = *r.top5;
  j["epochs"] = r.epochs;
  auto& curve = j["curve"] = nlohmann::ordered_json::array();
  for (const auto& e : r.curve)
    curve.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_top1", e.valid_top1}});
  auto num = [](double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v); };
  j["q_energy_corr_median"] = num(r.q_energy_corr_median);
  j["q_energy_negative_fraction"] = num(r.q_energy_negative_fraction);
  auto& ch = j["q_energy_corr_channel"] = nlohmann::ordered_json::array();
  for (double v : r.q_energy_corr_channel) ch.push_back(num(v));
  return j;
}

}  // namespace adafe::train
