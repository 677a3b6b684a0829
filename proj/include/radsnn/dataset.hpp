// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "radsnn/ann.hpp"
#include "radsnn/preprocess.hpp"
#include "radsnn/rng.hpp"
#include "radsnn/spectra.hpp"

namespace radsnn {

struct DatasetConfig {
  std::size_t n_channels = kDefaultChannels;
  double background_rate_hz = 5;
  double frame_duration_s = 1.0;
  std::size_t frames_per_condition = 120;
  std::vector<double> distances_cm{kDistancesCm.begin(), kDistancesCm.end()};
  double train_fraction = 0.7;
  RebinConfig rebin{};
};

struct Frame {
  std::size_t isotope = 0;
  double distance_cm = 0;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  EnergyHistogram raw;
};

inline std::uint64_t frame_seed(std::uint64_t root, std::size_t isotope, std::size_t distance_slot,
                                std::size_t frame) {
  return derive_seed(root, "frame", (isotope << 40) ^ (distance_slot << 32) ^ frame);
}

// Frames in (isotope, distance, frame) order.
inline std::vector<Frame> synth_frames(const std::vector<IsotopeTemplate>& isotopes,
                                       const DatasetConfig& cfg, std::uint64_t seed) {
  require(!isotopes.empty(), "no_templates", "no templates");
  for (const auto& t : isotopes) validate(t, cfg.n_channels);
  std::vector<Frame> frames;
  frames.reserve(isotopes.size() * cfg.distances_cm.size() * cfg.frames_per_condition);
  for (std::size_t iso = 0; iso < isotopes.size(); ++iso) {
    for (std::size_t d = 0; d < cfg.distances_cm.size(); ++d) {
      const double dist = cfg.distances_cm[d];
      require(is_supported_distance(dist), "invalid_config", "unsupported distance ", dist, " cm");
      const auto rates =
          expected_channel_rates(isotopes[iso], dist, cfg.background_rate_hz, cfg.n_channels);
      for (std::size_t f = 0; f < cfg.frames_per_condition; ++f) {
        const auto s = frame_seed(seed, iso, d, f);
        frames.push_back({iso, dist, f, s, sample_histogram(rates, cfg.frame_duration_s, s)});
      }
    }
  }
  return frames;
}

// Stratified by (label, distance): each stratum is shuffled and its first
// round(train_fraction * n) members go to training.
inline void stratified_split(LabeledDataset& ds, double train_fraction, std::uint64_t seed) {
  require(train_fraction >= 0 && train_fraction <= 1, "invalid_config",
          "train_fraction outside [0, 1]");
  std::map<std::pair<int, double>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    strata[{ds.samples[i].label, ds.samples[i].distance_cm}].push_back(i);
  Rng rng = make_rng(derive_seed(seed, "split"));
  ds.train.clear();
  ds.test.clear();
  for (auto& [key, idx] : strata) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train =
        static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    ds.train.insert(ds.train.end(), idx.begin(), idx.begin() + n_train);
    ds.test.insert(ds.test.end(), idx.begin() + n_train, idx.end());
  }
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.test.begin(), ds.test.end());
}

// Frames whose rebinned spectrum is empty cannot be normalized; they get an
// all-zero feature vector (the bias-free model then answers uniformly).
inline Sample make_sample(const Frame& f, const RebinConfig& rebin_cfg) {
  Sample s;
  s.label = static_cast<int>(f.isotope);
  s.distance_cm = f.distance_cm;
  s.frame = f.index;
  s.seed = f.seed;
  s.raw_counts = f.raw;
  s.counts = rebin(f.raw, rebin_cfg);
  if (s.counts.total() > 0 || rebin_cfg.norm_mode == NormMode::kNone)
    s.features = normalize(s.counts, rebin_cfg.norm_mode);
  else
    s.features.assign(s.counts.size(), 0.0);
  return s;
}

inline LabeledDataset make_dataset(const std::vector<Frame>& frames,
                                   const std::vector<IsotopeTemplate>& isotopes,
                                   const DatasetConfig& cfg, std::uint64_t seed) {
  LabeledDataset ds;
  for (const auto& t : isotopes) ds.class_names.push_back(t.name);
  ds.samples.reserve(frames.size());
  for (const auto& f : frames) ds.samples.push_back(make_sample(f, cfg.rebin));
  stratified_split(ds, cfg.train_fraction, seed);
  return ds;
}

inline LabeledDataset build_dataset(const std::vector<IsotopeTemplate>& isotopes,
                                    const DatasetConfig& cfg, std::uint64_t seed) {
  return make_dataset(synth_frames(isotopes, cfg, seed), isotopes, cfg, seed);
}

// Detector-side event stream of a frame: Poisson events over the raw
// (pre-rebin) spectrum, seeded from the frame.
inline EventStream raw_sample_stream(const Sample& s, double rate_hz, double duration_s) {
  return histogram_to_event_stream(s.raw_counts, rate_hz, duration_s,
                                   derive_seed(s.seed, "stream"));
}

// Network-side input of a sample: the detector stream with channels remapped
// by the rebin factor. An empty window or spectrum yields an empty stream.
inline EventStream sample_stream(const Sample& s, double rate_hz, double duration_s) {
  if (duration_s <= 0 || s.counts.total() == 0) {
    EventStream e;
    e.n_channels = static_cast<std::uint32_t>(s.counts.size());
    e.duration_us = duration_s > 0 ? static_cast<std::uint64_t>(std::llround(duration_s * 1e6)) : 0;
    return e;
  }
  const RebinConfig cfg{s.raw_counts.size() / s.counts.size(), s.raw_counts.size(), NormMode::kNone};
  return remap_stream(raw_sample_stream(s, rate_hz, duration_s), cfg);
}

}  // namespace radsnn
