// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "radsnn/error.hpp"
#include "radsnn/spectra.hpp"

namespace radsnn {

enum class NormMode { kL1, kMax, kNone };

inline NormMode parse_norm_mode(const std::string& s) {
  if (s == "L1") return NormMode::kL1;
  if (s == "MAX") return NormMode::kMax;
  if (s == "NONE") return NormMode::kNone;
  fail("invalid_config", "unknown norm mode '", s, "' (expected L1, MAX or NONE)");
}

inline const char* to_string(NormMode m) {
  switch (m) {
    case NormMode::kL1: return "L1";
    case NormMode::kMax: return "MAX";
    case NormMode::kNone: return "NONE";
  }
  return "?";
}

struct RebinConfig {
  std::size_t factor = 16;
  std::size_t n_channels_in = kDefaultChannels;
  NormMode norm_mode = NormMode::kL1;

  std::size_t n_channels_out() const { return n_channels_in / factor; }
};

inline void validate(const RebinConfig& cfg) {
  require(cfg.factor > 0, "invalid_config", "rebin factor must be positive");
  require(cfg.n_channels_in > 0 && cfg.n_channels_in % cfg.factor == 0, "invalid_config",
          "rebin factor ", cfg.factor, " does not divide ", cfg.n_channels_in);
}

inline EnergyHistogram rebin(const EnergyHistogram& hist, const RebinConfig& cfg) {
  validate(cfg);
  require(hist.size() == cfg.n_channels_in, "dimension_mismatch", "histogram length ",
          hist.size(), " != n_channels_in ", cfg.n_channels_in);
  EnergyHistogram out;
  out.integration_time_s = hist.integration_time_s;
  out.counts.assign(cfg.n_channels_out(), 0);
  for (std::size_t c = 0; c < hist.size(); ++c) out.counts[c / cfg.factor] += hist.counts[c];
  return out;
}

inline std::vector<double> normalize(const EnergyHistogram& hist, NormMode mode) {
  std::vector<double> v(hist.counts.begin(), hist.counts.end());
  if (mode == NormMode::kNone) return v;
  const double denom = mode == NormMode::kL1
                           ? static_cast<double>(hist.total())
                           : static_cast<double>(*std::max_element(hist.counts.begin(),
                                                                   hist.counts.end()));
  require(!hist.counts.empty() && denom > 0, "degenerate_frame", "degenerate frame");
  for (double& x : v) x /= denom;
  return v;
}

// Real-valued overload so normalization can be applied to its own output.
inline std::vector<double> normalize(std::vector<double> v, NormMode mode) {
  if (mode == NormMode::kNone) return v;
  double denom = 0;
  for (double x : v) denom = mode == NormMode::kL1 ? denom + x : std::max(denom, x);
  require(denom > 0, "degenerate_frame", "degenerate frame");
  for (double& x : v) x /= denom;
  return v;
}

inline std::uint32_t remap_event_channel(std::uint32_t channel, const RebinConfig& cfg) {
  require(channel < cfg.n_channels_in, "invalid_argument", "channel ", channel,
          " out of range [0, ", cfg.n_channels_in, ")");
  return static_cast<std::uint32_t>(channel / cfg.factor);
}

inline EventStream remap_stream(const EventStream& s, const RebinConfig& cfg) {
  validate(cfg);
  require(s.n_channels == cfg.n_channels_in, "dimension_mismatch", "stream has ",
          s.n_channels, " channels, expected ", cfg.n_channels_in);
  EventStream out;
  out.duration_us = s.duration_us;
  out.n_channels = static_cast<std::uint32_t>(cfg.n_channels_out());
  out.events.reserve(s.events.size());
  for (const auto& e : s.events) out.events.push_back({e.t_us, remap_event_channel(e.channel, cfg)});
  return out;
}

}  // namespace radsnn
