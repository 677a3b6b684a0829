// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Quantized MLP -> integer IF network.
//
// Weights are copied verbatim. Thresholds come from data-based normalization:
// calibration frames are replayed as event streams and, per layer, the
// integrated drive each neuron receives per input event is measured. The
// threshold is a high percentile of the positive drives (times a headroom
// factor), so the most strongly driven neurons fire about once per input
// event. Layers are calibrated in order; the output layer is measured with
// the already-calibrated hidden layer spiking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "radsnn/ann.hpp"
#include "radsnn/dataset.hpp"
#include "radsnn/error.hpp"
#include "radsnn/snn_core.hpp"
#include "radsnn/snn_network.hpp"
#include "radsnn/spectra.hpp"

namespace radsnn {

struct ConversionConfig {
  double threshold_percentile = 99.9;
  double threshold_headroom = 1.0;
  std::size_t calibration_frames = 200;
  double calibration_rate_hz = 500;
  double calibration_duration_s = 3;
  int accumulator_bits = kDefaultAccumulatorBits;
};

inline void validate(const ConversionConfig& c) {
  require(c.threshold_percentile > 0 && c.threshold_percentile <= 100, "invalid_config",
          "threshold_percentile outside (0, 100]");
  require(c.threshold_headroom > 0, "invalid_config", "threshold_headroom must be positive");
  require(c.calibration_frames > 0, "invalid_config", "calibration_frames must be positive");
  require(c.calibration_rate_hz > 0 && c.calibration_duration_s > 0, "invalid_config",
          "calibration rate and duration must be positive");
}

inline nlohmann::json to_json(const ConversionConfig& c) {
  return {{"threshold_percentile", c.threshold_percentile},
          {"threshold_headroom", c.threshold_headroom},
          {"calibration_frames", c.calibration_frames},
          {"calibration_rate_hz", c.calibration_rate_hz},
          {"calibration_duration_s", c.calibration_duration_s},
          {"accumulator_bits", c.accumulator_bits}};
}

// Linear interpolation between closest ranks.
inline double percentile(std::vector<double> v, double pct) {
  require(!v.empty(), "invalid_argument", "percentile of empty set");
  std::sort(v.begin(), v.end());
  const double pos = pct / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline SnnNetwork network_from_quantized(const QuantizedMlp& q, std::int32_t threshold_hidden,
                                         std::int32_t threshold_out,
                                         int accumulator_bits = kDefaultAccumulatorBits) {
  SnnNetwork net;
  net.accumulator_bits = accumulator_bits;
  net.layers.push_back({q.q_hidden, threshold_hidden, {}});
  net.layers.push_back({q.q_out, threshold_out, {}});
  net.zero_membranes();
  return net;
}

namespace detail {

inline std::int32_t threshold_from_drives(const std::vector<double>& drives,
                                          const ConversionConfig& cfg, const char* layer) {
  require(!drives.empty(), "degenerate_calibration", layer,
          ": zero calibration drive, threshold undefined");
  const double t = std::ceil(cfg.threshold_headroom * percentile(drives, cfg.threshold_percentile));
  require(t >= 1, "degenerate_calibration", layer, ": threshold computes to 0");
  return static_cast<std::int32_t>(std::min<double>(t, Accumulator{cfg.accumulator_bits}.max()));
}

}  // namespace detail

inline SnnNetwork convert_to_snn(const QuantizedMlp& q, std::span<const EnergyHistogram> calibration,
                                 const ConversionConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  require(!calibration.empty(), "invalid_argument", "calibration set is empty");
  const std::size_t n_frames = std::min(calibration.size(), cfg.calibration_frames);

  std::vector<EventStream> streams;
  for (std::size_t f = 0; f < n_frames; ++f) {
    const auto& h = calibration[f];
    require(h.size() == q.n_in(), "dimension_mismatch", "calibration frame length ", h.size(),
            " != n_in ", q.n_in());
    if (h.total() == 0) continue;
    streams.push_back(histogram_to_event_stream(h, cfg.calibration_rate_hz,
                                                cfg.calibration_duration_s,
                                                derive_seed(seed, "calibration", f)));
  }

  // Hidden layer: pure integration, no firing.
  std::vector<double> drives;
  for (const auto& s : streams) {
    if (s.events.empty()) continue;
    std::vector<std::int64_t> sum(q.n_hidden(), 0);
    for (const auto& e : s.events)
      for (std::size_t j = 0; j < q.n_hidden(); ++j) sum[j] += q.q_hidden(j, e.channel);
    for (auto v : sum)
      if (v > 0) drives.push_back(static_cast<double>(v) / static_cast<double>(s.events.size()));
  }
  const auto th_hidden = detail::threshold_from_drives(drives, cfg, "hidden");

  // Output layer: hidden layer spiking at its threshold, output integrating.
  SnnNetwork probe = network_from_quantized(q, th_hidden, Accumulator{cfg.accumulator_bits}.max(),
                                            cfg.accumulator_bits);
  probe.layers.resize(1);
  drives.clear();
  for (const auto& s : streams) {
    if (s.events.empty()) continue;
    GoldenModel hidden(probe);
    std::vector<std::int64_t> sum(q.n_out(), 0);
    for (const auto& e : s.events)
      for (const auto& spike : hidden.inject_event(e.channel, e.t_us))
        for (std::size_t k = 0; k < q.n_out(); ++k) sum[k] += q.q_out(k, spike.neuron);
    for (auto v : sum)
      if (v > 0) drives.push_back(static_cast<double>(v) / static_cast<double>(s.events.size()));
  }
  const auto th_out = detail::threshold_from_drives(drives, cfg, "output");

  return network_from_quantized(q, th_hidden, th_out, cfg.accumulator_bits);
}

// ---------------------------------------------------------------------------
// ANN / SNN agreement

struct FidelityReport {
  std::size_t samples = 0;
  std::size_t agreements = 0;
  std::size_t no_decision = 0;
  double agreement = 0;
  double mean_rank_correlation = 0;  // over samples with a decision
  std::vector<std::size_t> class_samples;
  std::vector<std::size_t> class_agreements;
  std::vector<int> ann_decisions;
  std::vector<int> snn_decisions;
};

// Average ranks, ties sharing the mean rank.
inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j);
    for (auto k = i; k <= j; ++k) r[idx[k]] = mean_rank;
    i = j + 1;
  }
  return r;
}

// Spearman correlation; nullopt when either side is constant.
inline std::optional<double> rank_correlation(std::span<const double> a, std::span<const double> b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

inline FidelityReport rate_fidelity_report(const QuantizedMlp& q, const SnnNetwork& net,
                                           std::span<const Sample> samples, double duration_s,
                                           double rate_hz) {
  const auto ann = dequantize(q);
  GoldenModel snn(net);
  FidelityReport r;
  r.class_samples.assign(net.n_out(), 0);
  r.class_agreements.assign(net.n_out(), 0);
  std::size_t correlated = 0;
  double corr_sum = 0;
  for (const auto& s : samples) {
    const auto f = forward(ann, s.features);
    const int a = argmax(f.logits);
    const auto rec = snn.run_stream(sample_stream(s, rate_hz, duration_s));
    const int b = classify(rec);
    ++r.samples;
    ++r.class_samples.at(static_cast<std::size_t>(s.label));
    r.ann_decisions.push_back(a);
    r.snn_decisions.push_back(b);
    if (b == kNoDecision) {
      ++r.no_decision;
      continue;
    }
    if (a == b) {
      ++r.agreements;
      ++r.class_agreements[static_cast<std::size_t>(s.label)];
    }
    std::vector<double> counts(rec.output_counts.begin(), rec.output_counts.end());
    if (auto c = rank_correlation(f.probabilities, counts)) {
      corr_sum += *c;
      ++correlated;
    }
  }
  r.agreement = r.samples ? static_cast<double>(r.agreements) / static_cast<double>(r.samples) : 0;
  r.mean_rank_correlation = correlated ? corr_sum / static_cast<double>(correlated) : 0;
  return r;
}

inline FidelityReport rate_fidelity_report(const QuantizedMlp& q, const SnnNetwork& net,
                                           const LabeledDataset& ds,
                                           std::span<const std::size_t> subset, double duration_s,
                                           double rate_hz) {
  std::vector<Sample> picked;
  picked.reserve(subset.size());
  for (auto i : subset) picked.push_back(ds.samples.at(i));
  return rate_fidelity_report(q, net, picked, duration_s, rate_hz);
}

inline nlohmann::json to_json(const FidelityReport& r) {
  return {{"samples", r.samples},
          {"agreements", r.agreements},
          {"agreement", r.agreement},
          {"no_decision", r.no_decision},
          {"mean_rank_correlation", r.mean_rank_correlation},
          {"class_samples", r.class_samples},
          {"class_agreements", r.class_agreements}};
}

}  // namespace radsnn
