// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Experiment sweeps over the whole pipeline (synthesize -> rebin -> train ->
// quantize -> convert -> spike), early-stopping readout, and trend checks.
//
// A trial is one complete pipeline instance under one seed. Sweep points
// aggregate per-trial accuracies into mean / std / n and keep the per-trial
// values so trends can be tested on paired differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "radsnn/ann.hpp"
#include "radsnn/convert.hpp"
#include "radsnn/dataset.hpp"
#include "radsnn/npu_sim.hpp"
#include "radsnn/snn_core.hpp"

namespace radsnn {

struct PipelineConfig {
  DatasetConfig data{};
  TrainConfig train{};
  ConversionConfig conversion{};
  PipelineTiming timing{};
  double rate_hz = 500;
  double duration_s = 3;
  std::vector<double> integration_times_ms{100, 300, 500, 1000, 2000, 3000, 5000};
  std::vector<std::size_t> hidden_sizes{8, 16, 24, 32, 40, 48, 64};
  std::size_t trials = 20;
  std::uint64_t early_stop_margin = 5;
  std::uint64_t early_stop_min_events = 0;
  unsigned threads = 0;  // 0: hardware concurrency
};

// Results come back in index order whatever the completion order.
template <typename F>
auto parallel_map(std::size_t n, F&& fn, unsigned threads = 0)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  std::vector<R> out;
  out.reserve(n);
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(fn(i));
    return out;
  }
  std::vector<std::future<R>> pending;
  for (std::size_t i = 0; i < n; ++i) {
    pending.push_back(std::async(std::launch::async, fn, i));
    if (pending.size() >= threads) {
      for (auto& f : pending) out.push_back(f.get());
      pending.clear();
    }
  }
  for (auto& f : pending) out.push_back(f.get());
  return out;
}

struct Trial {
  std::uint64_t seed = 0;
  LabeledDataset dataset;
  MlpParams mlp;
  QuantizedMlp quantized;
  SnnNetwork snn;
};

inline std::vector<EnergyHistogram> calibration_frames(const LabeledDataset& ds, std::size_t n,
                                                       std::uint64_t seed) {
  std::vector<std::size_t> idx = ds.train;
  Rng rng = make_rng(derive_seed(seed, "calibration.pick"));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(n, idx.size()));
  std::vector<EnergyHistogram> out;
  for (auto i : idx) out.push_back(ds.samples[i].counts);
  return out;
}

// Without `with_snn` the trial stops after quantization and `snn` stays empty.
inline Trial build_trial(const std::vector<IsotopeTemplate>& isotopes, const PipelineConfig& cfg,
                         std::uint64_t seed, bool with_snn = true) {
  Trial t;
  t.seed = seed;
  t.dataset = build_dataset(isotopes, cfg.data, derive_seed(seed, "gen"));
  t.mlp = train(t.dataset, cfg.train, derive_seed(seed, "train"));
  t.quantized = quantize(t.mlp);
  if (!with_snn) return t;
  const auto cal = calibration_frames(t.dataset, cfg.conversion.calibration_frames, seed);
  t.snn = convert_to_snn(t.quantized, cal, cfg.conversion, derive_seed(seed, "convert"));
  return t;
}

inline std::vector<std::uint64_t> trial_seeds(std::uint64_t root, std::size_t n) {
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(derive_seed(root, "trial", i));
  return s;
}

inline std::vector<Trial> build_trials(const std::vector<IsotopeTemplate>& isotopes,
                                       const PipelineConfig& cfg,
                                       std::span<const std::uint64_t> seeds, bool with_snn = true) {
  return parallel_map(
      seeds.size(), [&](std::size_t i) { return build_trial(isotopes, cfg, seeds[i], with_snn); },
      cfg.threads);
}

inline std::vector<int> snn_predictions(const SnnNetwork& net, const LabeledDataset& ds,
                                        std::span<const std::size_t> subset, double rate_hz,
                                        double duration_s) {
  GoldenModel g(net);
  std::vector<int> out;
  out.reserve(subset.size());
  for (auto i : subset) out.push_back(classify(g.run_stream(sample_stream(ds.samples[i], rate_hz, duration_s))));
  return out;
}

inline std::vector<int> labels_of(const LabeledDataset& ds, std::span<const std::size_t> subset) {
  std::vector<int> y;
  for (auto i : subset) y.push_back(ds.samples[i].label);
  return y;
}

inline double snn_accuracy(const SnnNetwork& net, const LabeledDataset& ds,
                           std::span<const std::size_t> subset, double rate_hz, double duration_s) {
  return evaluate(snn_predictions(net, ds, subset, rate_hz, duration_s), labels_of(ds, subset),
                  ds.n_classes())
      .accuracy;
}

// ---------------------------------------------------------------------------
// Sweep results

struct SweepPoint {
  double value = 0;
  double mean = 0;
  double std = 0;  // sample standard deviation over trials
  std::size_t n = 0;
  std::vector<double> trials;
};

struct SweepResult {
  std::string axis;
  std::string metric;
  std::vector<SweepPoint> points;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  std::optional<double> best_value;  // axis value with the highest mean
};

inline void finalize(SweepResult& r) {
  for (auto& p : r.points) {
    p.n = p.trials.size();
    p.mean = 0;
    for (double v : p.trials) p.mean += v / static_cast<double>(p.n);
    double ss = 0;
    for (double v : p.trials) ss += (v - p.mean) * (v - p.mean);
    p.std = p.n > 1 ? std::sqrt(ss / static_cast<double>(p.n - 1)) : 0.0;
  }
  r.best_value.reset();
  double best = -1;
  for (const auto& p : r.points)
    if (p.n > 0 && p.mean > best) {
      best = p.mean;
      r.best_value = p.value;
    }
}

// Concatenate the per-trial values of results that share axis values.
inline SweepResult merge_trials(std::span<const SweepResult> parts) {
  require(!parts.empty(), "invalid_argument", "nothing to merge");
  SweepResult out = parts.front();
  for (std::size_t k = 1; k < parts.size(); ++k) {
    require(parts[k].points.size() == out.points.size(), "invalid_argument",
            "sweep results have different grids");
    for (std::size_t i = 0; i < out.points.size(); ++i) {
      const auto& t = parts[k].points[i].trials;
      out.points[i].trials.insert(out.points[i].trials.end(), t.begin(), t.end());
    }
    out.seeds.insert(out.seeds.end(), parts[k].seeds.begin(), parts[k].seeds.end());
  }
  finalize(out);
  return out;
}

// Row "a -> b" violates a nondecreasing (direction = +1) or nonincreasing
// (direction = -1) trend when the paired mean difference is beyond
// `sigmas` standard errors the wrong way.
struct TrendViolation {
  std::size_t from = 0;
  std::size_t to = 0;
  double mean_diff = 0;
  double std_error = 0;
};

inline std::vector<TrendViolation> trend_violations(const SweepResult& r, int direction,
                                                    double sigmas) {
  std::vector<TrendViolation> out;
  for (std::size_t i = 0; i + 1 < r.points.size(); ++i) {
    const auto& a = r.points[i].trials;
    const auto& b = r.points[i + 1].trials;
    const std::size_t n = std::min(a.size(), b.size());
    if (n == 0) continue;
    double mean = 0;
    for (std::size_t k = 0; k < n; ++k) mean += (b[k] - a[k]) / static_cast<double>(n);
    double ss = 0;
    for (std::size_t k = 0; k < n; ++k) ss += (b[k] - a[k] - mean) * (b[k] - a[k] - mean);
    const double se = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0;
    if (direction * mean < -sigmas * se) out.push_back({i, i + 1, mean, se});
  }
  return out;
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  out << r.axis << ",mean,std,n\n";
  for (const auto& p : r.points) out << p.value << ',' << p.mean << ',' << p.std << ',' << p.n << '\n';
}

inline nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points)
    pts.push_back({{"value", p.value}, {"mean", p.mean}, {"std", p.std}, {"n", p.n}, {"trials", p.trials}});
  nlohmann::json j{{"axis", r.axis},
                   {"metric", r.metric},
                   {"points", pts},
                   {"seeds", r.seeds},
                   {"config_hash", r.config_hash}};
  j["best_value"] = r.best_value ? nlohmann::json(*r.best_value) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Sweeps

// One network, one set of samples: each sample gets a stream covering the
// longest window, and every shorter window is read off that same stream.
inline SweepResult sweep_integration_time(const SnnNetwork& net, const LabeledDataset& ds,
                                          std::span<const std::size_t> subset,
                                          std::span<const double> times_ms, double rate_hz) {
  require(!subset.empty(), "empty_dataset", "integration-time sweep on an empty dataset");
  require(!times_ms.empty(), "invalid_argument", "no integration times");
  for (std::size_t i = 0; i < times_ms.size(); ++i)
    require(times_ms[i] >= 0 && (i == 0 || times_ms[i] > times_ms[i - 1]), "invalid_argument",
            "integration times must be nonnegative and ascending");
  const double longest_s = times_ms.back() / 1000.0;
  std::vector<std::vector<int>> pred(times_ms.size());
  GoldenModel g(net);
  for (auto idx : subset) {
    const auto stream = sample_stream(ds.samples[idx], rate_hz, longest_s);
    g.reset();
    std::size_t e = 0;
    for (std::size_t k = 0; k < times_ms.size(); ++k) {
      const auto window_us = static_cast<std::uint64_t>(std::llround(times_ms[k] * 1000.0));
      for (; e < stream.events.size() && stream.events[e].t_us < window_us; ++e)
        g.inject_event(stream.events[e].channel, stream.events[e].t_us);
      pred[k].push_back(classify(g.record()));
    }
  }
  const auto labels = labels_of(ds, subset);
  SweepResult r;
  r.axis = "integration_time_ms";
  r.metric = "snn_accuracy";
  for (std::size_t k = 0; k < times_ms.size(); ++k) {
    SweepPoint p;
    p.value = times_ms[k];
    p.trials.push_back(evaluate(pred[k], labels, ds.n_classes()).accuracy);
    r.points.push_back(std::move(p));
  }
  finalize(r);
  return r;
}

inline SweepResult integration_time_sweep(std::span<const Trial> trials, const PipelineConfig& cfg,
                                          double distance_cm) {
  require(!trials.empty(), "empty_dataset", "no trials");
  auto parts = parallel_map(
      trials.size(),
      [&](std::size_t i) {
        const auto subset = trials[i].dataset.test_at(distance_cm);
        auto r = sweep_integration_time(trials[i].snn, trials[i].dataset, subset,
                                        cfg.integration_times_ms, cfg.rate_hz);
        r.seeds = {trials[i].seed};
        return r;
      },
      cfg.threads);
  return merge_trials(parts);
}

enum class Metric { kSnn, kAnnFloat, kAnnQuantized };

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::kSnn: return "snn_accuracy";
    case Metric::kAnnFloat: return "ann_accuracy";
    case Metric::kAnnQuantized: return "ann_int8_accuracy";
  }
  return "?";
}

inline double trial_accuracy(const Trial& t, std::span<const std::size_t> subset, Metric m,
                             const PipelineConfig& cfg) {
  switch (m) {
    case Metric::kSnn: return snn_accuracy(t.snn, t.dataset, subset, cfg.rate_hz, cfg.duration_s);
    case Metric::kAnnFloat: return evaluate(t.mlp, t.dataset, subset).accuracy;
    case Metric::kAnnQuantized: return evaluate(t.quantized, t.dataset, subset).accuracy;
  }
  return 0;
}

inline SweepResult sweep_distance(std::span<const Trial> trials, const PipelineConfig& cfg,
                                  std::span<const double> distances, Metric metric = Metric::kSnn) {
  for (double d : distances)
    require(is_supported_distance(d), "invalid_argument", "unknown distance ", d, " cm");
  SweepResult r;
  r.axis = "distance_cm";
  r.metric = to_string(metric);
  for (double d : distances) r.points.push_back({d, 0, 0, 0, {}});
  auto per_trial = parallel_map(
      trials.size(),
      [&](std::size_t i) {
        std::vector<double> acc;
        for (double d : distances) {
          const auto subset = trials[i].dataset.test_at(d);
          require(!subset.empty(), "empty_subset", "no test frames at ", d, " cm");
          acc.push_back(trial_accuracy(trials[i], subset, metric, cfg));
        }
        return acc;
      },
      cfg.threads);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    r.seeds.push_back(trials[i].seed);
    for (std::size_t k = 0; k < distances.size(); ++k) r.points[k].trials.push_back(per_trial[i][k]);
  }
  finalize(r);
  return r;
}

inline SweepResult sweep_distance(const std::vector<IsotopeTemplate>& isotopes,
                                  const PipelineConfig& cfg, std::span<const double> distances,
                                  std::span<const std::uint64_t> seeds,
                                  Metric metric = Metric::kSnn) {
  PipelineConfig c = cfg;
  c.data.distances_cm.assign(distances.begin(), distances.end());
  const auto trials = build_trials(isotopes, c, seeds, metric == Metric::kSnn);
  return sweep_distance(trials, c, distances, metric);
}

// One dataset per seed, one float ANN per (size, seed); metric is test
// accuracy over the full test split.
inline SweepResult sweep_hidden_size(const std::vector<IsotopeTemplate>& isotopes,
                                     const PipelineConfig& cfg, std::span<const std::size_t> sizes,
                                     std::span<const std::uint64_t> seeds) {
  for (auto s : sizes) require(s > 0, "invalid_argument", "hidden size must be positive");
  SweepResult r;
  r.axis = "hidden_size";
  r.metric = to_string(Metric::kAnnFloat);
  for (auto s : sizes) r.points.push_back({static_cast<double>(s), 0, 0, 0, {}});
  auto per_seed = parallel_map(
      seeds.size(),
      [&](std::size_t i) {
        const auto ds = build_dataset(isotopes, cfg.data, derive_seed(seeds[i], "gen"));
        std::vector<double> acc;
        for (auto size : sizes) {
          TrainConfig tc = cfg.train;
          tc.n_hidden = size;
          const auto p = train(ds, tc, derive_seed(seeds[i], "train"));
          acc.push_back(evaluate(p, ds, ds.test).accuracy);
        }
        return acc;
      },
      cfg.threads);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    r.seeds.push_back(seeds[i]);
    for (std::size_t k = 0; k < sizes.size(); ++k) r.points[k].trials.push_back(per_seed[i][k]);
  }
  finalize(r);
  return r;
}

// ---------------------------------------------------------------------------
// Early stopping

inline constexpr std::uint64_t kNeverStop = std::numeric_limits<std::uint64_t>::max();

struct EarlyStopDecision {
  int decision = kNoDecision;
  std::uint64_t decision_time_us = 0;
  bool early = false;  // false: end-of-window fallback
  std::size_t events_consumed = 0;
};

inline EarlyStopDecision early_stop_classify(const SnnNetwork& net, const EventStream& stream,
                                             std::uint64_t margin, std::uint64_t min_events = 0) {
  require(margin >= 1, "invalid_argument", "margin must be >= 1");
  GoldenModel g(net);
  const auto& counts = g.output_counts();
  const auto out_layer = static_cast<std::uint32_t>(net.layers.size());
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const auto& e = stream.events[i];
    const auto emitted = g.inject_event(e.channel, e.t_us);
    const bool output_spiked = std::any_of(emitted.begin(), emitted.end(),
                                           [&](const AerEvent& a) { return a.layer == out_layer; });
    if (!output_spiked) continue;
    std::uint64_t total = 0, first = 0, second = 0;
    std::size_t leader = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      total += counts[k];
      if (counts[k] > first) {
        second = first;
        first = counts[k];
        leader = k;
      } else if (counts[k] > second) {
        second = counts[k];
      }
    }
    if (first - second >= margin && total >= min_events)
      return {static_cast<int>(leader), e.t_us, true, i + 1};
  }
  return {classify(g.record()), stream.duration_us, false, stream.events.size()};
}

}  // namespace radsnn
