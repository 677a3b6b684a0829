// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Tool configuration: one JSON document with a section per module.
//
//   {
//     "spectra":    {templates, n_channels, background_rate_hz, frame_duration_s},
//     "gen":        {frames_per_condition, distances_cm, train_fraction, write_streams},
//     "preprocess": {factor, norm_mode},
//     "ann":        {n_hidden, epochs, batch_size, learning_rate, momentum,
//                    lr_decay, lr_step_epochs, init_gain},
//     "convert":    {threshold_percentile, threshold_headroom, calibration_frames,
//                    calibration_rate_hz, calibration_duration_s, accumulator_bits},
//     "npu":        {stall_cycles_after_fire, clock_hz, input_policy},
//     "eval":       {rate_hz, duration_s, integration_times_ms, hidden_sizes, trials,
//                    early_stop_margin, early_stop_min_events, threads}
//   }
//
// Every key is optional; unknown keys are rejected so typos do not pass
// silently.

#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>

#include "radsnn/error.hpp"
#include "radsnn/eval.hpp"
#include "radsnn/rng.hpp"

#ifndef RADSNN_DATA_DIR
#define RADSNN_DATA_DIR "data"
#endif

namespace radsnn {

enum class StreamDump { kNone, kTest, kAll };

inline StreamDump parse_stream_dump(const std::string& s) {
  if (s == "none") return StreamDump::kNone;
  if (s == "test") return StreamDump::kTest;
  if (s == "all") return StreamDump::kAll;
  fail("invalid_config", "gen.write_streams must be none, test or all (got '", s, "')");
}

inline InputPolicy parse_input_policy(const std::string& s) {
  if (s == "strict") return InputPolicy::kStrict;
  if (s == "handshake") return InputPolicy::kHandshake;
  fail("invalid_config", "npu.input_policy must be strict or handshake (got '", s, "')");
}

inline const char* to_string(InputPolicy p) {
  return p == InputPolicy::kStrict ? "strict" : "handshake";
}

inline const char* to_string(StreamDump s) {
  switch (s) {
    case StreamDump::kNone: return "none";
    case StreamDump::kTest: return "test";
    case StreamDump::kAll: return "all";
  }
  return "?";
}

// Real Poisson input occasionally puts two events 1 us apart behind a
// transaction with many hidden fires, so the tool defaults to the handshake
// input policy; "strict" turns those cases into event_overrun errors.
inline PipelineConfig default_tool_pipeline() {
  PipelineConfig p;
  p.timing.input_policy = InputPolicy::kHandshake;
  return p;
}

struct ToolConfig {
  std::string templates = std::string(RADSNN_DATA_DIR) + "/isotopes.json";
  PipelineConfig pipeline = default_tool_pipeline();
  StreamDump write_streams = StreamDump::kTest;
};

namespace detail {

class Section {
 public:
  Section(const nlohmann::json& root, const char* name) : name_(name) {
    if (!root.contains(name)) return;
    j_ = root.at(name);
    require(j_.is_object(), "invalid_config", "section '", name, "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& dest) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dest = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail("invalid_config", name_, ".", key, ": ", e.what());
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      require(used_.count(k) > 0, "invalid_config", "unknown key '", name_, ".", k, "'");
  }

 private:
  std::string name_;
  nlohmann::json j_ = nlohmann::json::object();
  std::set<std::string> used_;
};

}  // namespace detail

inline void validate(const ToolConfig& c) {
  const auto& p = c.pipeline;
  require(p.data.n_channels > 0, "invalid_config", "spectra.n_channels must be positive");
  require(p.data.background_rate_hz >= 0, "invalid_config", "spectra.background_rate_hz < 0");
  require(p.data.frame_duration_s > 0, "invalid_config", "spectra.frame_duration_s must be positive");
  require(p.data.frames_per_condition > 0, "invalid_config", "gen.frames_per_condition must be positive");
  require(!p.data.distances_cm.empty(), "invalid_config", "gen.distances_cm is empty");
  for (double d : p.data.distances_cm)
    require(is_supported_distance(d), "invalid_config", "unsupported distance ", d, " cm");
  RebinConfig r = p.data.rebin;
  r.n_channels_in = p.data.n_channels;
  validate(r);
  require(p.train.n_hidden > 0 && p.train.batch_size > 0, "invalid_config",
          "ann.n_hidden and ann.batch_size must be positive");
  validate(p.conversion);
  require(p.conversion.accumulator_bits >= 8 && p.conversion.accumulator_bits <= 31, "invalid_config",
          "convert.accumulator_bits outside [8, 31]");
  require(p.timing.clock_hz > 0, "invalid_config", "npu.clock_hz must be positive");
  require(p.rate_hz > 0 && p.rate_hz <= kMaxEventRateHz, "invalid_config",
          "eval.rate_hz outside (0, ", kMaxEventRateHz, "]");
  require(p.duration_s > 0, "invalid_config", "eval.duration_s must be positive");
  require(p.trials >= 1, "invalid_config", "eval.trials must be >= 1");
  require(p.early_stop_margin >= 1, "invalid_config", "eval.early_stop_margin must be >= 1");
  require(!p.integration_times_ms.empty() && !p.hidden_sizes.empty(), "invalid_config",
          "eval grids must be nonempty");
}

inline ToolConfig config_from_json(const nlohmann::json& root) {
  require(root.is_object(), "invalid_config", "config must be a JSON object");
  static const std::set<std::string> sections{"spectra", "gen", "preprocess", "ann",
                                              "convert", "npu", "eval"};
  for (const auto& [k, v] : root.items())
    require(sections.count(k) > 0, "invalid_config", "unknown section '", k, "'");

  ToolConfig c;
  auto& p = c.pipeline;
  {
    detail::Section s(root, "spectra");
    s.get("templates", c.templates);
    s.get("n_channels", p.data.n_channels);
    s.get("background_rate_hz", p.data.background_rate_hz);
    s.get("frame_duration_s", p.data.frame_duration_s);
    s.finish();
  }
  {
    detail::Section s(root, "gen");
    std::string dump = to_string(c.write_streams);
    s.get("frames_per_condition", p.data.frames_per_condition);
    s.get("distances_cm", p.data.distances_cm);
    s.get("train_fraction", p.data.train_fraction);
    s.get("write_streams", dump);
    c.write_streams = parse_stream_dump(dump);
    s.finish();
  }
  {
    detail::Section s(root, "preprocess");
    std::string mode = to_string(p.data.rebin.norm_mode);
    s.get("factor", p.data.rebin.factor);
    s.get("norm_mode", mode);
    p.data.rebin.norm_mode = parse_norm_mode(mode);
    s.finish();
  }
  {
    detail::Section s(root, "ann");
    s.get("n_hidden", p.train.n_hidden);
    s.get("epochs", p.train.epochs);
    s.get("batch_size", p.train.batch_size);
    s.get("learning_rate", p.train.learning_rate);
    s.get("momentum", p.train.momentum);
    s.get("lr_decay", p.train.lr_decay);
    s.get("lr_step_epochs", p.train.lr_step_epochs);
    s.get("init_gain", p.train.init_gain);
    s.finish();
  }
  {
    detail::Section s(root, "convert");
    s.get("threshold_percentile", p.conversion.threshold_percentile);
    s.get("threshold_headroom", p.conversion.threshold_headroom);
    s.get("calibration_frames", p.conversion.calibration_frames);
    s.get("calibration_rate_hz", p.conversion.calibration_rate_hz);
    s.get("calibration_duration_s", p.conversion.calibration_duration_s);
    s.get("accumulator_bits", p.conversion.accumulator_bits);
    s.finish();
  }
  {
    detail::Section s(root, "npu");
    s.get("stall_cycles_after_fire", p.timing.stall_cycles_after_fire);
    s.get("clock_hz", p.timing.clock_hz);
    std::string policy = to_string(p.timing.input_policy);
    s.get("input_policy", policy);
    p.timing.input_policy = parse_input_policy(policy);
    s.finish();
  }
  {
    detail::Section s(root, "eval");
    s.get("rate_hz", p.rate_hz);
    s.get("duration_s", p.duration_s);
    s.get("integration_times_ms", p.integration_times_ms);
    s.get("hidden_sizes", p.hidden_sizes);
    s.get("trials", p.trials);
    s.get("early_stop_margin", p.early_stop_margin);
    s.get("early_stop_min_events", p.early_stop_min_events);
    s.get("threads", p.threads);
    s.finish();
  }
  p.data.rebin.n_channels_in = p.data.n_channels;
  validate(c);
  return c;
}

// Fully resolved configuration, every key present. Thread count is left out:
// it never changes results.
inline nlohmann::json to_json(const ToolConfig& c) {
  const auto& p = c.pipeline;
  return {
      {"spectra",
       {{"templates", c.templates},
        {"n_channels", p.data.n_channels},
        {"background_rate_hz", p.data.background_rate_hz},
        {"frame_duration_s", p.data.frame_duration_s}}},
      {"gen",
       {{"frames_per_condition", p.data.frames_per_condition},
        {"distances_cm", p.data.distances_cm},
        {"train_fraction", p.data.train_fraction},
        {"write_streams", to_string(c.write_streams)}}},
      {"preprocess", {{"factor", p.data.rebin.factor}, {"norm_mode", to_string(p.data.rebin.norm_mode)}}},
      {"ann",
       {{"n_hidden", p.train.n_hidden},
        {"epochs", p.train.epochs},
        {"batch_size", p.train.batch_size},
        {"learning_rate", p.train.learning_rate},
        {"momentum", p.train.momentum},
        {"lr_decay", p.train.lr_decay},
        {"lr_step_epochs", p.train.lr_step_epochs},
        {"init_gain", p.train.init_gain}}},
      {"convert", to_json(p.conversion)},
      {"npu",
       {{"stall_cycles_after_fire", p.timing.stall_cycles_after_fire},
        {"clock_hz", p.timing.clock_hz},
        {"input_policy", to_string(p.timing.input_policy)}}},
      {"eval",
       {{"rate_hz", p.rate_hz},
        {"duration_s", p.duration_s},
        {"integration_times_ms", p.integration_times_ms},
        {"hidden_sizes", p.hidden_sizes},
        {"trials", p.trials},
        {"early_stop_margin", p.early_stop_margin},
        {"early_stop_min_events", p.early_stop_min_events}}}};
}

inline std::string config_hash(const ToolConfig& c) { return hash_hex(to_json(c).dump()); }

}  // namespace radsnn
