// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Golden behavioral model of the integrate-and-fire network.
//
// Each input event carries a single presynaptic spike, so the full-sum update
// V(t) = V(t-1) + sum_i x_i w_i + L (with L = 0) collapses to V += w_i for the
// one active synapse. A neuron that reaches threshold fires and resets hard to
// zero. A spike is propagated depth-first: the downstream layer is fully
// updated before the next neuron of the current layer is evaluated, which is
// the transaction order of the hardware unit.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "radsnn/error.hpp"
#include "radsnn/snn_network.hpp"
#include "radsnn/spectra.hpp"

namespace radsnn {

// Leak term of the general IF update; fixed to zero.
inline constexpr std::int32_t kLeak = 0;

struct AerEvent {
  std::uint64_t t_us = 0;
  std::uint32_t layer = 0;   // 0 = input, 1 = first network layer, ...
  std::uint32_t neuron = 0;
  bool operator==(const AerEvent&) const = default;
};

struct SpikeRecord {
  std::vector<std::vector<AerEvent>> layers;            // index = AER layer
  std::vector<std::uint64_t> output_counts;
  std::vector<std::vector<std::int32_t>> final_membranes;  // per network layer

  bool operator==(const SpikeRecord&) const = default;

  std::uint64_t total_output_spikes() const {
    std::uint64_t s = 0;
    for (auto c : output_counts) s += c;
    return s;
  }
};

class GoldenModel {
 public:
  explicit GoldenModel(SnnNetwork net) : net_(std::move(net)) {
    validate(net_);
    clear_record();
  }

  // Zero every membrane and forget all recorded spikes.
  void reset() {
    net_.zero_membranes();
    last_t_.reset();
    clear_record();
  }

  // Events emitted by the network layers (input event excluded), in emission
  // order.
  std::vector<AerEvent> inject_event(std::uint32_t channel, std::uint64_t t_us) {
    require(channel < net_.n_in(), "invalid_argument", "input channel ", channel,
            " out of range [0, ", net_.n_in(), ")");
    require(!last_t_ || t_us > *last_t_, "non_monotonic", "timestamp ", t_us,
            " not after previous injection ", last_t_.value_or(0));
    last_t_ = t_us;
    record_.layers[0].push_back({t_us, 0, channel});
    std::vector<AerEvent> out;
    deliver(0, channel, t_us, out);
    return out;
  }

  // Continue from the current state without resetting.
  void feed(const EventStream& stream) {
    require(stream.n_channels <= net_.n_in(), "invalid_argument", "stream has ",
            stream.n_channels, " channels but network fan-in is ", net_.n_in());
    for (const auto& e : stream.events) inject_event(e.channel, e.t_us);
  }

  SpikeRecord run_stream(const EventStream& stream) {
    reset();
    feed(stream);
    return record();
  }

  // Spikes so far plus the current membrane snapshot.
  SpikeRecord record() const {
    SpikeRecord r = record_;
    for (const auto& l : net_.layers) r.final_membranes.push_back(l.membrane);
    return r;
  }

  const std::vector<std::uint64_t>& output_counts() const { return record_.output_counts; }
  const SnnNetwork& network() const { return net_; }
  SnnNetwork& mutable_network() { return net_; }

  std::int32_t membrane(std::size_t layer, std::size_t neuron) const {
    return net_.layers[layer].membrane[neuron];
  }

 private:
  void deliver(std::size_t layer, std::uint32_t pre, std::uint64_t t_us,
               std::vector<AerEvent>& out) {
    auto& l = net_.layers[layer];
    const auto acc = net_.accumulator();
    for (std::uint32_t post = 0; post < l.n_post(); ++post) {
      auto& v = l.membrane[post];
      v = acc.add(acc.add(v, l.weights(post, pre)), kLeak);
      if (v < l.threshold) continue;
      v = 0;
      const AerEvent e{t_us, static_cast<std::uint32_t>(layer + 1), post};
      out.push_back(e);
      record_.layers[layer + 1].push_back(e);
      if (layer + 1 == net_.layers.size())
        ++record_.output_counts[post];
      else
        deliver(layer + 1, post, t_us, out);
    }
  }

  void clear_record() {
    record_ = SpikeRecord{};
    record_.layers.resize(net_.layers.size() + 1);
    record_.output_counts.assign(net_.n_out(), 0);
  }

  SnnNetwork net_;
  std::optional<std::uint64_t> last_t_;
  SpikeRecord record_;
};

struct ReadoutPolicy {
  std::uint64_t min_output_spikes = 1;  // below this total: no decision
};

// Argmax of output spike counts. Among tied leaders the neuron that reached
// the tied count first (in emission order) wins.
inline int classify(const SpikeRecord& rec, const ReadoutPolicy& policy = {}) {
  const auto& counts = rec.output_counts;
  if (counts.empty() || rec.total_output_spikes() < std::max<std::uint64_t>(policy.min_output_spikes, 1))
    return -1;
  const auto best = *std::max_element(counts.begin(), counts.end());
  std::vector<std::uint64_t> seen(counts.size(), 0);
  for (const auto& e : rec.layers.back()) {
    if (counts[e.neuron] == best && ++seen[e.neuron] == best) return static_cast<int>(e.neuron);
  }
  // Counts not backed by events (hand-built record): lowest index wins.
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

// JSON Lines of {t_us, layer, neuron}, time-ordered; within a timestep
// events are grouped by layer, each group in emission order.
inline void write_spike_record(std::ostream& out, const SpikeRecord& rec) {
  std::vector<AerEvent> all;
  for (const auto& l : rec.layers) all.insert(all.end(), l.begin(), l.end());
  std::stable_sort(all.begin(), all.end(),
                   [](const AerEvent& a, const AerEvent& b) { return a.t_us < b.t_us; });
  for (const auto& e : all)
    out << "{\"layer\":" << e.layer << ",\"neuron\":" << e.neuron << ",\"t_us\":" << e.t_us << "}\n";
}

inline nlohmann::json spike_summary(const SpikeRecord& rec, const ReadoutPolicy& policy = {}) {
  nlohmann::json per_layer = nlohmann::json::array();
  for (const auto& l : rec.layers) per_layer.push_back(l.size());
  const int decision = classify(rec, policy);
  return {{"layer_spike_counts", per_layer},
          {"output_counts", rec.output_counts},
          {"decision", decision < 0 ? nlohmann::json("no decision") : nlohmann::json(decision)}};
}

}  // namespace radsnn
