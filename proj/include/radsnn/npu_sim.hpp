// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Cycle-accurate model of the layer-per-unit Neuron Processing Unit.
//
// One NPU serves one network layer. An incoming AER request (presynaptic
// address) starts a transaction: one control cycle, then one postsynaptic
// neuron per cycle in ascending index (time-division multiplexed over a single
// adder/comparator). Each update reads one weight from the weight memory that
// all layers share; the memory has a single read port. When a neuron fires,
// the unit raises an AER request to the downstream unit and stalls for
// `stall_cycles` while the downstream transaction owns the memory port.
//
// Cycle-level protocol (c = cycle of a firing update in the upstream unit):
//   c        upstream reads weight, neuron fires, request registered
//   c+1      downstream control cycle; upstream stall 1
//   c+2..    downstream updates (one read per cycle)
//   c+1+n    last downstream update (n = downstream n_post)
//   c+s      last upstream stall cycle; upstream reads again at c+s+1
// The stall is sufficient iff s >= n + 1; a shorter stall shows up as a
// read-port conflict or an AER request to a busy unit.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include <json.hpp>

#include "radsnn/error.hpp"
#include "radsnn/snn_core.hpp"
#include "radsnn/snn_network.hpp"
#include "radsnn/spectra.hpp"

namespace radsnn {

inline constexpr std::uint32_t kDefaultStallCycles = 9;
inline constexpr std::uint64_t kDefaultClockHz = 100'000'000;

struct NpuConfig {
  std::size_t n_pre = 0;
  std::size_t n_post = 0;
  std::int32_t threshold = 1;
  std::vector<std::int8_t> weight_memory;  // [pre * n_post + post]
  std::uint32_t stall_cycles_after_fire = 0;
  std::uint64_t clock_hz = kDefaultClockHz;
  int accumulator_bits = kDefaultAccumulatorBits;
};

// Timing model: cycles a transaction occupies its unit.
constexpr std::uint64_t transaction_cycles(std::size_t n_post, std::size_t fires,
                                           std::uint32_t stall_cycles) {
  return 1 + n_post + std::uint64_t{stall_cycles} * fires;
}

inline NpuConfig make_layer_config(const SnnNetwork& net, std::size_t layer,
                                   std::uint32_t stall_cycles = kDefaultStallCycles,
                                   std::uint64_t clock_hz = kDefaultClockHz) {
  const auto& l = net.layers.at(layer);
  NpuConfig cfg;
  cfg.n_pre = l.n_pre();
  cfg.n_post = l.n_post();
  cfg.threshold = l.threshold;
  cfg.stall_cycles_after_fire = layer + 1 < net.layers.size() ? stall_cycles : 0;
  cfg.clock_hz = clock_hz;
  cfg.accumulator_bits = net.accumulator_bits;
  cfg.weight_memory.resize(cfg.n_pre * cfg.n_post);
  for (std::size_t pre = 0; pre < cfg.n_pre; ++pre)
    for (std::size_t post = 0; post < cfg.n_post; ++post)
      cfg.weight_memory[pre * cfg.n_post + post] = l.weights(post, pre);
  return cfg;
}

inline void validate(const NpuConfig& cfg) {
  require(cfg.n_pre > 0 && cfg.n_post > 0, "invalid_config", "NPU dimensions must be positive");
  require(cfg.weight_memory.size() == cfg.n_pre * cfg.n_post, "invalid_config",
          "weight memory length ", cfg.weight_memory.size(), " != n_pre * n_post");
  require(cfg.threshold >= 1, "invalid_config", "NPU threshold must be >= 1");
  require(cfg.clock_hz > 0, "invalid_config", "clock must be positive");
}

// Single-ported weight store shared by every unit in a pipeline.
class SharedWeightMemory {
 public:
  std::size_t allocate(std::span<const std::int8_t> words) {
    const auto base = data_.size();
    data_.insert(data_.end(), words.begin(), words.end());
    return base;
  }

  std::int8_t read(std::size_t addr, std::uint64_t cycle) {
    require(!last_read_ || *last_read_ != cycle, "port_conflict",
            "weight memory read-port conflict at cycle ", cycle);
    last_read_ = cycle;
    ++reads_;
    return data_.at(addr);
  }

  // Fault injection: perturb one stored word, saturating to int8.
  void poke(std::size_t addr, int delta) {
    data_.at(addr) = static_cast<std::int8_t>(std::clamp(data_[addr] + delta, -128, 127));
  }
  std::int8_t peek(std::size_t addr) const { return data_.at(addr); }

  std::uint64_t reads() const { return reads_; }
  void reset_port() { last_read_.reset(); }

 private:
  std::vector<std::int8_t> data_;
  std::optional<std::uint64_t> last_read_;
  std::uint64_t reads_ = 0;
};

struct TransactionRecord {
  std::uint32_t layer = 0;  // AER layer of the unit (1 = hidden, ...)
  std::uint64_t start_cycle = 0;
  std::uint64_t cycles = 0;
  std::uint32_t pre = 0;
  std::vector<std::uint32_t> fired;
};

// One layer's processing unit. Memory lives outside so several units can share
// the port.
class Npu {
 public:
  enum class Phase { kIdle, kUpdate, kStall };

  Npu(NpuConfig cfg, std::size_t base_address, std::uint32_t aer_layer)
      : cfg_(std::move(cfg)), base_(base_address), aer_layer_(aer_layer) {
    validate(cfg_);
    membrane_.assign(cfg_.n_post, 0);
  }

  struct TickOutput {
    bool busy = false;
    std::optional<std::uint32_t> fired;            // AER request raised this cycle
    std::optional<TransactionRecord> completed;
  };

  // Advance one clock cycle. `request` is the AER address latched at the end
  // of the previous cycle.
  TickOutput tick(std::uint64_t cycle, std::optional<std::uint32_t> request,
                  SharedWeightMemory& mem) {
    TickOutput out;
    if (request) {
      require(phase_ == Phase::kIdle, aer_layer_ == 1 ? "event_overrun" : "aer_overlap",
              "AER request for layer ", aer_layer_, " unit while busy at cycle ", cycle);
      require(*request < cfg_.n_pre, "invalid_argument", "presynaptic address ", *request,
              " out of range");
      // Control cycle: latch the address, point the TDM counter at neuron 0.
      current_ = TransactionRecord{aer_layer_, cycle, 0, *request, {}};
      next_post_ = 0;
      phase_ = Phase::kUpdate;
      out.busy = true;
      ++busy_cycles_;
      return out;
    }
    switch (phase_) {
      case Phase::kIdle:
        return out;
      case Phase::kUpdate: {
        const auto post = next_post_++;
        const auto w = mem.read(base_ + std::size_t{current_.pre} * cfg_.n_post + post, cycle);
        const Accumulator acc{cfg_.accumulator_bits};
        auto& v = membrane_[post];
        v = acc.add(v, w);
        if (v >= cfg_.threshold) {
          v = 0;
          out.fired = post;
          current_.fired.push_back(post);
        }
        if (out.fired && cfg_.stall_cycles_after_fire > 0) {
          stall_left_ = cfg_.stall_cycles_after_fire;
          phase_ = Phase::kStall;
        } else if (next_post_ == cfg_.n_post) {
          finish(cycle, out);
        }
        break;
      }
      case Phase::kStall:
        if (--stall_left_ == 0) {
          if (next_post_ == cfg_.n_post)
            finish(cycle, out);
          else
            phase_ = Phase::kUpdate;
        }
        break;
    }
    out.busy = true;
    ++busy_cycles_;
    return out;
  }

  // Drive one transaction to completion on an otherwise quiet memory; requests
  // raised towards a downstream unit are returned, not delivered.
  std::pair<std::uint64_t, std::vector<std::uint32_t>> run_transaction(
      std::uint32_t pre, SharedWeightMemory& mem, std::uint64_t start_cycle = 0) {
    require(pre < cfg_.n_pre, "invalid_argument", "presynaptic index ", pre, " out of range [0, ",
            cfg_.n_pre, ")");
    require(idle(), "invalid_state", "unit is mid-transaction");
    std::uint64_t cycle = start_cycle;
    auto out = tick(cycle++, pre, mem);
    while (!out.completed) out = tick(cycle++, std::nullopt, mem);
    return {out.completed->cycles, out.completed->fired};
  }

  bool idle() const { return phase_ == Phase::kIdle; }
  void reset() {
    membrane_.assign(cfg_.n_post, 0);
    phase_ = Phase::kIdle;
    busy_cycles_ = 0;
  }

  const NpuConfig& config() const { return cfg_; }
  std::size_t base_address() const { return base_; }
  const std::vector<std::int32_t>& membranes() const { return membrane_; }
  std::uint64_t busy_cycles() const { return busy_cycles_; }

 private:
  void finish(std::uint64_t cycle, TickOutput& out) {
    current_.cycles = cycle - current_.start_cycle + 1;
    out.completed = std::move(current_);
    current_ = {};
    phase_ = Phase::kIdle;
  }

  NpuConfig cfg_;
  std::size_t base_ = 0;
  std::uint32_t aer_layer_ = 1;
  std::vector<std::int32_t> membrane_;
  Phase phase_ = Phase::kIdle;
  std::size_t next_post_ = 0;
  std::uint32_t stall_left_ = 0;
  TransactionRecord current_;
  std::uint64_t busy_cycles_ = 0;
};

struct CycleTrace {
  std::uint64_t clock_hz = kDefaultClockHz;
  std::uint64_t duration_us = 0;
  std::uint64_t total_cycles = 0;
  std::uint64_t busy_cycles = 0;   // any unit in TDM or stall
  std::uint64_t idle_cycles = 0;
  std::uint64_t input_events = 0;
  std::uint64_t memory_reads = 0;
  std::uint64_t transaction_count = 0;
  std::vector<std::uint64_t> layer_busy_cycles;  // per unit
  std::vector<std::uint64_t> layer_spikes;       // per AER layer, 0 = input
  std::vector<TransactionRecord> transactions;   // empty unless recorded
  std::uint64_t deferred_events = 0;             // handshake policy only
  std::uint64_t max_input_wait_cycles = 0;
};

// What happens to an input event that arrives while the pipeline is still
// busy with the previous one. kStrict raises event_overrun. kHandshake holds
// the AER request until the hidden unit acknowledges it, as a req/ack link
// would; spikes and membranes are unaffected, only timing shifts.
enum class InputPolicy { kStrict, kHandshake };

struct PipelineTiming {
  std::uint32_t stall_cycles_after_fire = kDefaultStallCycles;
  std::uint64_t clock_hz = kDefaultClockHz;
  bool record_transactions = true;
  InputPolicy input_policy = InputPolicy::kStrict;
};

// Chain of NPUs, one per network layer, fed by input AER events.
class NpuPipeline {
 public:
  explicit NpuPipeline(const SnnNetwork& net, PipelineTiming timing = {}) : timing_(timing) {
    validate(net);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      auto cfg = make_layer_config(net, l, timing.stall_cycles_after_fire, timing.clock_hz);
      const auto base = memory_.allocate(cfg.weight_memory);
      units_.emplace_back(std::move(cfg), base, static_cast<std::uint32_t>(l + 1));
    }
    reset();
  }

  void reset() {
    for (auto& u : units_) u.reset();
    memory_.reset_port();
    now_ = 0;
    event_index_ = 0;
    last_t_.reset();
    trace_ = CycleTrace{};
    trace_.clock_hz = timing_.clock_hz;
    trace_.layer_busy_cycles.assign(units_.size(), 0);
    trace_.layer_spikes.assign(units_.size() + 1, 0);
    record_ = SpikeRecord{};
    record_.layers.resize(units_.size() + 1);
    record_.output_counts.assign(units_.back().config().n_post, 0);
    reads_at_reset_ = memory_.reads();
  }

  std::uint64_t cycle_of(std::uint64_t t_us) const {
    return static_cast<std::uint64_t>(static_cast<unsigned __int128>(t_us) * timing_.clock_hz /
                                      1'000'000);
  }
  std::uint64_t cycles_for_duration(std::uint64_t duration_us) const {
    const auto num = static_cast<unsigned __int128>(duration_us) * timing_.clock_hz;
    return static_cast<std::uint64_t>((num + 999'999) / 1'000'000);
  }

  // Present one input event at its arrival cycle and clock the pipeline until
  // every unit is idle again. Returns the spikes emitted by network layers.
  std::vector<AerEvent> feed_event(const DetectionEvent& ev) {
    require(ev.channel < units_.front().config().n_pre, "invalid_argument", "input channel ",
            ev.channel, " out of range");
    require(!last_t_ || ev.t_us > *last_t_, "non_monotonic", "event ", event_index_,
            ": timestamp not increasing");
    auto arrival = cycle_of(ev.t_us);
    if (arrival < now_) {
      require(timing_.input_policy == InputPolicy::kHandshake, "event_overrun",
              "event overrun at event index ", event_index_, " (t_us=", ev.t_us,
              "): previous transaction active until cycle ", now_);
      ++trace_.deferred_events;
      trace_.max_input_wait_cycles = std::max(trace_.max_input_wait_cycles, now_ - arrival);
      arrival = now_;
    }
    trace_.idle_cycles += arrival - now_;
    now_ = arrival;
    last_t_ = ev.t_us;
    ++trace_.input_events;
    ++trace_.layer_spikes[0];
    record_.layers[0].push_back({ev.t_us, 0, ev.channel});

    std::vector<AerEvent> emitted;
    std::vector<std::optional<std::uint32_t>> req(units_.size() + 1);
    req[0] = ev.channel;
    bool active = true;
    while (active) {
      std::vector<std::optional<std::uint32_t>> next(units_.size() + 1);
      bool any_busy = false;
      for (std::size_t u = 0; u < units_.size(); ++u) {
        auto out = units_[u].tick(now_, req[u], memory_);
        if (out.busy) {
          any_busy = true;
          ++trace_.layer_busy_cycles[u];
        }
        if (out.fired) {
          next[u + 1] = out.fired;
          const AerEvent e{ev.t_us, static_cast<std::uint32_t>(u + 1), *out.fired};
          emitted.push_back(e);
          record_.layers[u + 1].push_back(e);
          ++trace_.layer_spikes[u + 1];
          if (u + 1 == units_.size()) ++record_.output_counts[*out.fired];
        }
        if (out.completed) {
          ++trace_.transaction_count;
          if (timing_.record_transactions) trace_.transactions.push_back(std::move(*out.completed));
        }
      }
      // Requests out of the last layer leave the pipeline.
      next.back().reset();
      if (any_busy) ++trace_.busy_cycles;
      ++now_;
      req = std::move(next);
      active = std::any_of(units_.begin(), units_.end(), [](const Npu& n) { return !n.idle(); }) ||
               std::any_of(req.begin(), req.end(), [](const auto& r) { return r.has_value(); });
    }
    ++event_index_;
    return emitted;
  }

  // Account idle cycles to the end of the window and close the trace.
  void finish(std::uint64_t duration_us) {
    const auto total = std::max(cycles_for_duration(duration_us), now_);
    trace_.idle_cycles += total - now_;
    now_ = total;
    trace_.duration_us = duration_us;
    trace_.total_cycles = total;
    trace_.memory_reads = memory_.reads() - reads_at_reset_;
  }

  SpikeRecord record() const {
    SpikeRecord r = record_;
    for (const auto& u : units_) r.final_membranes.push_back(u.membranes());
    return r;
  }
  const CycleTrace& trace() const { return trace_; }

  std::size_t n_units() const { return units_.size(); }
  const Npu& unit(std::size_t l) const { return units_.at(l); }
  std::int32_t membrane(std::size_t layer, std::size_t neuron) const {
    return units_.at(layer).membranes().at(neuron);
  }

  // Perturb the stored weight of synapse (pre -> post) of network layer
  // `layer` (0-based) by `delta`.
  void inject_weight_fault(std::size_t layer, std::size_t post, std::size_t pre, int delta) {
    const auto& u = units_.at(layer);
    require(post < u.config().n_post && pre < u.config().n_pre, "invalid_argument",
            "fault site out of range");
    memory_.poke(u.base_address() + pre * u.config().n_post + post, delta);
  }
  std::int8_t stored_weight(std::size_t layer, std::size_t post, std::size_t pre) const {
    const auto& u = units_.at(layer);
    return memory_.peek(u.base_address() + pre * u.config().n_post + post);
  }

  const PipelineTiming& timing() const { return timing_; }

 private:
  PipelineTiming timing_;
  SharedWeightMemory memory_;
  std::vector<Npu> units_;
  std::uint64_t now_ = 0;  // next cycle to simulate
  std::size_t event_index_ = 0;
  std::optional<std::uint64_t> last_t_;
  std::uint64_t reads_at_reset_ = 0;
  CycleTrace trace_;
  SpikeRecord record_;
};

inline std::pair<SpikeRecord, CycleTrace> run_stream_cycle_accurate(NpuPipeline& npu,
                                                                    const EventStream& stream) {
  npu.reset();
  for (const auto& e : stream.events) npu.feed_event(e);
  npu.finish(stream.duration_us);
  return {npu.record(), npu.trace()};
}

// ---------------------------------------------------------------------------
// Scoreboard

struct MembraneMismatch {
  std::size_t event_index = 0;
  std::uint64_t t_us = 0;
  std::uint32_t layer = 0;  // AER layer (1 = hidden, ...)
  std::uint32_t neuron = 0;
  std::int32_t expected = 0;  // golden
  std::int32_t actual = 0;    // npu
};

struct VerificationReport {
  bool pass = true;
  std::size_t checkpoints = 0;
  std::size_t neuron_checks = 0;
  std::size_t mismatches = 0;
  std::size_t mismatched_checkpoints = 0;
  std::vector<std::vector<std::size_t>> per_neuron_mismatches;  // [unit][neuron]
  std::optional<MembraneMismatch> first_mismatch;
};

// Scan order for a checkpoint: layer ascending, neuron ascending.
inline VerificationReport run_with_scoreboard(NpuPipeline& npu, const SnnNetwork& golden_net,
                                              const EventStream& stream) {
  GoldenModel golden(golden_net);
  golden.reset();
  npu.reset();
  require(golden.network().layers.size() == npu.n_units(), "invalid_argument",
          "golden and NPU topologies differ");
  VerificationReport rep;
  for (std::size_t l = 0; l < npu.n_units(); ++l) {
    require(golden.network().layers[l].n_post() == npu.unit(l).config().n_post,
            "invalid_argument", "golden and NPU layer widths differ");
    rep.per_neuron_mismatches.emplace_back(npu.unit(l).config().n_post, 0);
  }
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const auto& e = stream.events[i];
    golden.inject_event(e.channel, e.t_us);
    npu.feed_event(e);
    ++rep.checkpoints;
    bool bad = false;
    for (std::size_t l = 0; l < npu.n_units(); ++l) {
      for (std::size_t n = 0; n < npu.unit(l).config().n_post; ++n) {
        ++rep.neuron_checks;
        const auto exp = golden.membrane(l, n);
        const auto act = npu.membrane(l, n);
        if (exp == act) continue;
        bad = true;
        ++rep.mismatches;
        ++rep.per_neuron_mismatches[l][n];
        if (!rep.first_mismatch)
          rep.first_mismatch = MembraneMismatch{i, e.t_us, static_cast<std::uint32_t>(l + 1),
                                                static_cast<std::uint32_t>(n), exp, act};
      }
    }
    if (bad) ++rep.mismatched_checkpoints;
  }
  npu.finish(stream.duration_us);
  rep.pass = rep.mismatches == 0;
  return rep;
}

inline nlohmann::json to_json(const VerificationReport& r) {
  nlohmann::json j{{"pass", r.pass},
                   {"checkpoints", r.checkpoints},
                   {"neuron_checks", r.neuron_checks},
                   {"mismatches", r.mismatches},
                   {"mismatched_checkpoints", r.mismatched_checkpoints},
                   {"per_neuron_mismatches", r.per_neuron_mismatches}};
  if (r.first_mismatch) {
    const auto& m = *r.first_mismatch;
    j["first_mismatch"] = {{"event_index", m.event_index}, {"t_us", m.t_us},
                           {"layer", m.layer},             {"neuron", m.neuron},
                           {"expected", m.expected},       {"actual", m.actual}};
  } else {
    j["first_mismatch"] = nullptr;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Activity report

struct ActivityReport {
  double duration_s = 0;
  std::uint64_t total_cycles = 0;
  std::uint64_t busy_cycles = 0;
  double busy_fraction = 0;
  double transactions_per_s = 0;
  double spikes_per_s = 0;       // network-layer spikes
  double input_events_per_s = 0;
  // Linear stand-in for the dynamic processing share of power: the busy
  // fraction itself (static and clock-tree power are charged to every cycle
  // alike and so cancel out of the share).
  double energy_proxy = 0;
  std::vector<double> layer_busy_fraction;
};

inline ActivityReport activity_report(const CycleTrace& t, std::uint64_t clock_hz) {
  ActivityReport r;
  r.total_cycles = t.total_cycles;
  r.busy_cycles = t.busy_cycles;
  r.duration_s = clock_hz > 0 ? static_cast<double>(t.total_cycles) / static_cast<double>(clock_hz) : 0;
  r.busy_fraction =
      t.total_cycles > 0 ? static_cast<double>(t.busy_cycles) / static_cast<double>(t.total_cycles) : 0;
  std::uint64_t spikes = 0;
  for (std::size_t l = 1; l < t.layer_spikes.size(); ++l) spikes += t.layer_spikes[l];
  if (r.duration_s > 0) {
    r.transactions_per_s = static_cast<double>(t.transaction_count) / r.duration_s;
    r.spikes_per_s = static_cast<double>(spikes) / r.duration_s;
    r.input_events_per_s = static_cast<double>(t.input_events) / r.duration_s;
  }
  r.energy_proxy = r.busy_fraction;
  for (auto b : t.layer_busy_cycles)
    r.layer_busy_fraction.push_back(
        t.total_cycles > 0 ? static_cast<double>(b) / static_cast<double>(t.total_cycles) : 0);
  return r;
}

inline nlohmann::json to_json(const ActivityReport& r) {
  return {{"duration_s", r.duration_s},
          {"total_cycles", r.total_cycles},
          {"busy_cycles", r.busy_cycles},
          {"busy_fraction", r.busy_fraction},
          {"transactions_per_s", r.transactions_per_s},
          {"spikes_per_s", r.spikes_per_s},
          {"input_events_per_s", r.input_events_per_s},
          {"energy_proxy", r.energy_proxy},
          {"layer_busy_fraction", r.layer_busy_fraction}};
}

inline nlohmann::json to_json(const CycleTrace& t) {
  return {{"clock_hz", t.clock_hz},
          {"duration_us", t.duration_us},
          {"total_cycles", t.total_cycles},
          {"busy_cycles", t.busy_cycles},
          {"idle_cycles", t.idle_cycles},
          {"input_events", t.input_events},
          {"memory_reads", t.memory_reads},
          {"transactions", t.transaction_count},
          {"layer_busy_cycles", t.layer_busy_cycles},
          {"layer_spikes", t.layer_spikes},
          {"deferred_events", t.deferred_events},
          {"max_input_wait_cycles", t.max_input_wait_cycles}};
}

// Per-transaction CSV: layer,start_cycle,cycles,pre,fired (fired: ';'-joined).
inline void write_transactions_csv(std::ostream& out, const CycleTrace& t) {
  out << "layer,start_cycle,cycles,pre,fired\n";
  for (const auto& tr : t.transactions) {
    out << tr.layer << ',' << tr.start_cycle << ',' << tr.cycles << ',' << tr.pre << ',';
    for (std::size_t i = 0; i < tr.fired.size(); ++i) out << (i ? ";" : "") << tr.fired[i];
    out << '\n';
  }
}

}  // namespace radsnn
