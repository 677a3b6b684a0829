// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// radsnn: command-line driver for the isotope-identification SNN toolkit.
//
//   radsnn gen       synthesize the labeled frame dataset (+ event streams)
//   radsnn train     fit the float MLP
//   radsnn quantize  int8 post-training quantization
//   radsnn convert   quantized MLP -> integer IF network
//   radsnn run       classify the dataset streams on the golden model or the NPU
//   radsnn verify    scoreboard the cycle-accurate NPU against the golden model
//   radsnn sweep     distance / hidden-size / integration-time sweeps
//   radsnn report    summarize run, verify and sweep artifacts
//
// Artifacts live in --out. Progress goes to stderr, results to stdout and
// files. Failures print {"error":{"code":...,"message":...}} on stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "radsnn/ann.hpp"
#include "radsnn/config.hpp"
#include "radsnn/convert.hpp"
#include "radsnn/dataset.hpp"
#include "radsnn/eval.hpp"
#include "radsnn/manifest.hpp"
#include "radsnn/npu_sim.hpp"
#include "radsnn/snn_core.hpp"
#include "radsnn/spectra.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace radsnn;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitMismatch = 3;

struct Globals {
  std::string config;
  std::uint64_t seed = 42;
  std::string out = "out";
  bool quiet = false;
};

struct Context {
  Globals g;
  ToolConfig cfg;
  fs::path out;

  void note(const std::string& msg) const {
    if (!g.quiet) std::cerr << "radsnn: " << msg << '\n';
  }
  Manifest manifest(const std::string& sub) const {
    Manifest m;
    m.subcommand = sub;
    m.config = to_json(cfg);
    m.seed = g.seed;
    return m;
  }
};

Context make_context(const Globals& g) {
  Context c;
  c.g = g;
  c.out = g.out;
  if (!g.config.empty()) {
    json j;
    try {
      j = json::parse(read_file(g.config));
    } catch (const json::parse_error& e) {
      fail("parse_error", g.config, ": ", e.what());
    }
    c.cfg = config_from_json(j);
  }
  return c;
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  return fs::relative(p, base).generic_string();
}

std::string sample_id(const std::string& name, double distance_cm, std::size_t frame) {
  std::ostringstream oss;
  oss << name << '_' << std::setw(3) << std::setfill('0') << static_cast<int>(distance_cm) << "cm_"
      << std::setw(4) << frame;
  return oss.str();
}

void print_json(const json& j) { std::cout << j.dump() << "\n"; }

// ---------------------------------------------------------------------------
// Dataset on disk

struct DiskDataset {
  LabeledDataset ds;
  std::vector<std::string> ids;
  std::vector<std::optional<FileRef>> streams;  // raw detector streams, if written
  double stream_rate_hz = 0;
  double stream_duration_s = 0;
  Artifact artifact;
};

DiskDataset load_dataset(const Context& c, const fs::path& path) {
  DiskDataset d;
  d.artifact = load_artifact(path, "gen");
  const auto& j = d.artifact.payload;
  const fs::path base = path.parent_path();
  try {
    d.ds.class_names = j.at("class_names").get<std::vector<std::string>>();
    d.stream_rate_hz = j.at("stream_rate_hz").get<double>();
    d.stream_duration_s = j.at("stream_duration_s").get<double>();
    const double frame_s = j.at("frame_duration_s").get<double>();
    RebinConfig rebin = c.cfg.pipeline.data.rebin;
    rebin.n_channels_in = j.at("n_channels").get<std::size_t>();
    for (const auto& s : j.at("samples")) {
      const auto& h = s.at("histogram");
      const auto hist_path = base / h.at("path").get<std::string>();
      Frame f;
      f.isotope = s.at("label").get<std::size_t>();
      f.distance_cm = s.at("distance_cm").get<double>();
      f.index = s.at("frame").get<std::size_t>();
      f.seed = s.at("seed").get<std::uint64_t>();
      f.raw = histogram_from_csv(read_verified(hist_path, h.at("hash").get<std::string>()), frame_s,
                                 hist_path.string());
      require(f.raw.size() == rebin.n_channels_in, "dimension_mismatch", hist_path.string(),
              ": ", f.raw.size(), " channels, dataset declares ", rebin.n_channels_in);
      const auto idx = d.ds.samples.size();
      d.ds.samples.push_back(make_sample(f, rebin));
      d.ids.push_back(s.at("id").get<std::string>());
      const auto split = s.at("split").get<std::string>();
      require(split == "train" || split == "test", "parse_error", path.string(), ": bad split '",
              split, "'");
      (split == "train" ? d.ds.train : d.ds.test).push_back(idx);
      if (s.contains("stream"))
        d.streams.push_back(FileRef{s["stream"].at("path").get<std::string>(),
                                    s["stream"].at("hash").get<std::string>()});
      else
        d.streams.emplace_back();
    }
  } catch (const json::exception& e) {
    fail("parse_error", path.string(), ": ", e.what());
  }
  validate(d.ds);
  return d;
}

// Network-side stream of sample i: the stored detector stream when it was
// written with the requested rate and window, otherwise regenerated (the two
// are identical by construction).
EventStream input_stream(const DiskDataset& d, std::size_t i, const fs::path& base, double rate_hz,
                         double duration_s, std::size_t n_in) {
  const auto& s = d.ds.samples[i];
  if (d.streams[i] && rate_hz == d.stream_rate_hz && duration_s == d.stream_duration_s) {
    const auto p = base / d.streams[i]->path;
    auto raw = stream_from_string(read_verified(p, d.streams[i]->hash), p.string());
    require(raw.n_channels % n_in == 0, "dimension_mismatch", p.string(), ": ", raw.n_channels,
            " channels do not rebin onto ", n_in, " inputs");
    return remap_stream(raw, {raw.n_channels / n_in, raw.n_channels, NormMode::kNone});
  }
  return sample_stream(s, rate_hz, duration_s);
}

std::vector<std::size_t> select(const LabeledDataset& ds, const std::string& split,
                                const std::vector<double>& distances) {
  std::vector<std::size_t> base;
  if (split == "train") base = ds.train;
  else if (split == "test") base = ds.test;
  else if (split == "all") {
    for (std::size_t i = 0; i < ds.samples.size(); ++i) base.push_back(i);
  } else fail("invalid_argument", "split must be train, test or all");
  if (distances.empty()) return base;
  std::vector<std::size_t> out;
  for (auto i : base)
    if (std::find(distances.begin(), distances.end(), ds.samples[i].distance_cm) != distances.end())
      out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// gen

int cmd_gen(Context& c, std::optional<std::size_t> frames, const std::string& streams) {
  auto& data = c.cfg.pipeline.data;
  if (frames) data.frames_per_condition = *frames;
  if (!streams.empty()) c.cfg.write_streams = parse_stream_dump(streams);
  validate(c.cfg);
  const auto templates = load_templates(c.cfg.templates, data.n_channels);
  const auto seed = derive_seed(c.g.seed, "gen");
  c.note("synthesizing " + std::to_string(templates.size() * data.distances_cm.size() *
                                          data.frames_per_condition) + " frames");
  const auto frames_v = synth_frames(templates, data, seed);
  const auto ds = make_dataset(frames_v, templates, data, seed);

  std::vector<bool> in_test(ds.samples.size(), false);
  for (auto i : ds.test) in_test[i] = true;
  const double rate = c.cfg.pipeline.rate_hz, dur = c.cfg.pipeline.duration_s;

  json samples = json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const auto id = sample_id(ds.class_names[static_cast<std::size_t>(s.label)], s.distance_cm, s.frame);
    const auto csv = histogram_to_csv(s.raw_counts);
    const auto hist_rel = "hist/" + id + ".csv";
    write_text(c.out / hist_rel, csv);
    json entry{{"id", id},
               {"label", s.label},
               {"isotope", ds.class_names[static_cast<std::size_t>(s.label)]},
               {"distance_cm", s.distance_cm},
               {"frame", s.frame},
               {"seed", s.seed},
               {"split", in_test[i] ? "test" : "train"},
               {"histogram", {{"path", hist_rel}, {"hash", text_hash(csv)}}}};
    const bool dump = c.cfg.write_streams == StreamDump::kAll ||
                      (c.cfg.write_streams == StreamDump::kTest && in_test[i]);
    if (dump && s.raw_counts.total() > 0) {
      const auto text = stream_to_string(raw_sample_stream(s, rate, dur));
      const auto rel = "streams/" + id + ".jsonl";
      write_text(c.out / rel, text);
      entry["stream"] = {{"path", rel}, {"hash", text_hash(text)}};
    }
    samples.push_back(std::move(entry));
  }
  json payload{{"class_names", ds.class_names},
               {"n_channels", data.n_channels},
               {"frame_duration_s", data.frame_duration_s},
               {"stream_rate_hz", rate},
               {"stream_duration_s", dur},
               {"n_train", ds.train.size()},
               {"n_test", ds.test.size()},
               {"samples", std::move(samples)}};
  auto m = c.manifest("gen");
  m.inputs.push_back({c.cfg.templates, file_hash(c.cfg.templates)});
  write_artifact(c.out / "dataset.json", seal(payload, m));
  c.note("wrote " + (c.out / "dataset.json").string());
  print_json({{"frames", ds.samples.size()}, {"train", ds.train.size()}, {"test", ds.test.size()}});
  return 0;
}

// ---------------------------------------------------------------------------
// train / quantize / convert

int cmd_train(Context& c, const std::string& dataset_path) {
  const auto d = load_dataset(c, dataset_path.empty() ? c.out / "dataset.json" : fs::path(dataset_path));
  c.note("training on " + std::to_string(d.ds.train.size()) + " frames");
  const auto p = train(d.ds, c.cfg.pipeline.train, derive_seed(c.g.seed, "train"));
  auto payload = to_json(p);
  payload["class_names"] = d.ds.class_names;
  auto m = c.manifest("train");
  m.inputs.push_back({relative_to(d.artifact.path, c.out), d.artifact.manifest.content_hash});
  write_artifact(c.out / "model.json", seal(payload, m));
  print_json({{"train_accuracy", p.train_accuracy.value_or(0)},
              {"test_accuracy", p.test_accuracy.value_or(0)}});
  return 0;
}

int cmd_quantize(Context& c, const std::string& model_path) {
  const auto a = load_artifact(model_path.empty() ? c.out / "model.json" : fs::path(model_path), "train");
  const auto p = mlp_from_json(a.payload);
  const auto q = quantize(p);
  auto payload = to_json(p, q);
  payload["class_names"] = a.payload.value("class_names", json::array());
  json summary{{"scale_hidden", q.scale_hidden}, {"scale_out", q.scale_out}};
  const auto ds_path = c.out / "dataset.json";
  auto m = c.manifest("quantize");
  m.inputs.push_back({relative_to(a.path, c.out), a.manifest.content_hash});
  if (fs::exists(ds_path)) {
    const auto d = load_dataset(c, ds_path);
    const double fa = evaluate(p, d.ds, d.ds.test).accuracy;
    const double qa = evaluate(q, d.ds, d.ds.test).accuracy;
    payload["test_accuracy_float"] = fa;
    payload["test_accuracy_int8"] = qa;
    summary["test_accuracy_float"] = fa;
    summary["test_accuracy_int8"] = qa;
    m.inputs.push_back({relative_to(d.artifact.path, c.out), d.artifact.manifest.content_hash});
  }
  write_artifact(c.out / "model_q.json", seal(payload, m));
  print_json(summary);
  return 0;
}

int cmd_convert(Context& c, const std::string& model_path, const std::string& dataset_path) {
  const auto a = load_artifact(model_path.empty() ? c.out / "model_q.json" : fs::path(model_path), "quantize");
  const auto q = quantized_from_json(a.payload);
  const auto d = load_dataset(c, dataset_path.empty() ? c.out / "dataset.json" : fs::path(dataset_path));
  const auto& cc = c.cfg.pipeline.conversion;
  const auto cal = calibration_frames(d.ds, cc.calibration_frames, c.g.seed);
  c.note("calibrating thresholds on " + std::to_string(cal.size()) + " training frames");
  const auto net = convert_to_snn(q, cal, cc, derive_seed(c.g.seed, "convert"));
  json payload{{"network", to_json(net)},
               {"source_model_hash", a.manifest.content_hash},
               {"conversion", to_json(cc)},
               {"class_names", a.payload.value("class_names", json::array())}};
  auto m = c.manifest("convert");
  m.inputs.push_back({relative_to(a.path, c.out), a.manifest.content_hash});
  m.inputs.push_back({relative_to(d.artifact.path, c.out), d.artifact.manifest.content_hash});
  write_artifact(c.out / "snn.json", seal(payload, m));
  print_json({{"threshold_hidden", net.layers[0].threshold},
              {"threshold_out", net.layers[1].threshold},
              {"accumulator_bits", net.accumulator_bits}});
  return 0;
}

struct LoadedSnn {
  SnnNetwork net;
  Artifact artifact;
};

LoadedSnn load_snn(const Context& c, const std::string& path) {
  LoadedSnn s;
  s.artifact = load_artifact(path.empty() ? c.out / "snn.json" : fs::path(path), "convert");
  try {
    s.net = snn_from_json(s.artifact.payload.at("network"));
  } catch (const json::exception& e) {
    fail("parse_error", s.artifact.path.string(), ": ", e.what());
  }
  return s;
}

// ---------------------------------------------------------------------------
// run

struct Tally {
  std::size_t n = 0, snn_correct = 0, ann_correct = 0, agree = 0, no_decision = 0;
  std::size_t early_correct = 0, early_decided = 0;
  double decision_time_us_sum = 0;

  json to_json() const {
    const auto frac = [&](std::size_t k) { return n ? static_cast<double>(k) / static_cast<double>(n) : 0.0; };
    return {{"n", n},
            {"snn_accuracy", frac(snn_correct)},
            {"ann_accuracy", frac(ann_correct)},
            {"agreement", frac(agree)},
            {"no_decision", no_decision},
            {"early_stop_accuracy", frac(early_correct)},
            {"early_stop_fraction", frac(early_decided)},
            {"mean_decision_time_ms", n ? decision_time_us_sum / static_cast<double>(n) / 1000.0 : 0.0}};
  }
};

int cmd_run(Context& c, const std::string& engine, const std::string& split,
            const std::vector<double>& distances, const std::string& snn_path) {
  require(engine == "golden" || engine == "npu", "invalid_argument", "engine must be golden or npu");
  const auto snn = load_snn(c, snn_path);
  const auto qa = load_artifact(c.out / "model_q.json", "quantize");
  require(qa.manifest.content_hash == snn.artifact.payload.value("source_model_hash", ""),
          "hash_mismatch", "snn.json was converted from a different model_q.json");
  const auto q = quantized_from_json(qa.payload);
  const auto ann = dequantize(q);
  const auto d = load_dataset(c, c.out / "dataset.json");
  const auto subset = select(d.ds, split, distances);
  require(!subset.empty(), "empty_subset", "no frames selected");
  const auto& pc = c.cfg.pipeline;
  c.note("running " + std::to_string(subset.size()) + " streams on the " + engine + " engine");

  GoldenModel golden(snn.net);
  std::optional<NpuPipeline> npu;
  if (engine == "npu") {
    PipelineTiming t = pc.timing;
    t.record_transactions = false;
    npu.emplace(snn.net, t);
  }
  Tally all;
  std::map<double, Tally> by_distance;
  std::uint64_t total_cycles = 0, busy_cycles = 0, transactions = 0, deferred = 0, max_wait = 0;
  for (std::size_t k = 0; k < subset.size(); ++k) {
    const auto i = subset[k];
    const auto& s = d.ds.samples[i];
    const auto stream = input_stream(d, i, c.out, pc.rate_hz, pc.duration_s, snn.net.n_in());
    SpikeRecord rec;
    if (npu) {
      auto [r, trace] = run_stream_cycle_accurate(*npu, stream);
      rec = std::move(r);
      total_cycles += trace.total_cycles;
      busy_cycles += trace.busy_cycles;
      transactions += trace.transaction_count;
      deferred += trace.deferred_events;
      max_wait = std::max(max_wait, trace.max_input_wait_cycles);
      if (k == 0) {
        NpuPipeline traced(snn.net, pc.timing);
        const auto full = run_stream_cycle_accurate(traced, stream).second;
        std::ostringstream csv;
        write_transactions_csv(csv, full);
        write_text(c.out / "run_trace.csv", csv.str());
        auto m = c.manifest("run");
        m.outputs.push_back({"run_trace.csv", text_hash(csv.str())});
        json tj = to_json(full);
        tj["sample"] = d.ids[i];
        tj["activity"] = to_json(activity_report(full, pc.timing.clock_hz));
        write_artifact(c.out / "run_trace.json", seal(tj, m));
      }
    } else {
      rec = golden.run_stream(stream);
    }
    if (k == 0) {
      std::ostringstream jl;
      write_spike_record(jl, rec);
      write_text(c.out / "run_spikes.jsonl", jl.str());
      auto m = c.manifest("run");
      m.outputs.push_back({"run_spikes.jsonl", text_hash(jl.str())});
      json sj = spike_summary(rec);
      sj["sample"] = d.ids[i];
      write_artifact(c.out / "run_spikes.json", seal(sj, m));
    }
    const int snn_pred = classify(rec);
    const int ann_pred = predict(ann, s.features);
    const auto es = early_stop_classify(snn.net, stream, pc.early_stop_margin, pc.early_stop_min_events);
    for (Tally* t : {&all, &by_distance[s.distance_cm]}) {
      ++t->n;
      t->snn_correct += snn_pred == s.label;
      t->ann_correct += ann_pred == s.label;
      t->agree += snn_pred == ann_pred;
      t->no_decision += snn_pred == kNoDecision;
      t->early_correct += es.decision == s.label;
      t->early_decided += es.early;
      t->decision_time_us_sum += static_cast<double>(es.decision_time_us);
    }
    if (!c.g.quiet && (k + 1) % 200 == 0) c.note(std::to_string(k + 1) + "/" + std::to_string(subset.size()));
  }

  json per = json::array();
  for (const auto& [dist, t] : by_distance) {
    auto j = t.to_json();
    j["distance_cm"] = dist;
    per.push_back(j);
  }
  json payload{{"engine", engine},
               {"split", split},
               {"rate_hz", pc.rate_hz},
               {"duration_s", pc.duration_s},
               {"early_stop_margin", pc.early_stop_margin},
               {"overall", all.to_json()},
               {"per_distance", per}};
  if (npu) {
    payload["activity"] = {
        {"total_cycles", total_cycles},
        {"busy_cycles", busy_cycles},
        {"transactions", transactions},
        {"deferred_events", deferred},
        {"max_input_wait_cycles", max_wait},
        {"busy_fraction", total_cycles ? static_cast<double>(busy_cycles) / static_cast<double>(total_cycles) : 0.0}};
  }
  auto m = c.manifest("run");
  m.inputs.push_back({relative_to(snn.artifact.path, c.out), snn.artifact.manifest.content_hash});
  m.inputs.push_back({relative_to(qa.path, c.out), qa.manifest.content_hash});
  m.inputs.push_back({relative_to(d.artifact.path, c.out), d.artifact.manifest.content_hash});
  write_artifact(c.out / "run.json", seal(payload, m));
  print_json(payload);
  return 0;
}

// ---------------------------------------------------------------------------
// verify

std::vector<long long> parse_ints(const std::string& spec, std::size_t n, const char* what) {
  std::vector<long long> v;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoll(tok, &used));
      require(used == tok.size(), "invalid_argument", what, ": bad integer '", tok, "'");
    } catch (const std::logic_error&) {
      fail("invalid_argument", what, ": bad integer '", tok, "'");
    }
  }
  require(v.size() == n, "invalid_argument", what, ": expected ", n, " ':'-separated integers");
  return v;
}

int cmd_verify(Context& c, const std::string& snn_path, const std::string& stream_path,
               const std::string& sample, const std::string& fault, const std::string& th_fault) {
  const auto snn = load_snn(c, snn_path);
  const auto& pc = c.cfg.pipeline;
  EventStream stream;
  std::string source;
  if (!stream_path.empty()) {
    stream = stream_from_string(read_file(stream_path), stream_path);
    source = stream_path;
    if (stream.n_channels != snn.net.n_in()) {
      require(stream.n_channels % snn.net.n_in() == 0, "dimension_mismatch", stream_path, ": ",
              stream.n_channels, " channels do not rebin onto ", snn.net.n_in(), " inputs");
      stream = remap_stream(stream, {stream.n_channels / snn.net.n_in(), stream.n_channels, NormMode::kNone});
    }
  } else {
    const auto d = load_dataset(c, c.out / "dataset.json");
    std::size_t idx = d.ds.test.empty() ? 0 : d.ds.test.front();
    if (!sample.empty()) {
      const auto it = std::find(d.ids.begin(), d.ids.end(), sample);
      require(it != d.ids.end(), "invalid_argument", "no sample '", sample, "'");
      idx = static_cast<std::size_t>(it - d.ids.begin());
    }
    require(idx < d.ds.samples.size(), "empty_dataset", "dataset is empty");
    stream = input_stream(d, idx, c.out, pc.rate_hz, pc.duration_s, snn.net.n_in());
    source = d.ids[idx];
  }

  NpuPipeline npu(snn.net, pc.timing);
  SnnNetwork golden = snn.net;
  json injected = json::object();
  if (!fault.empty()) {
    const auto f = parse_ints(fault, 4, "--inject-weight-fault");
    require(f[0] >= 1 && static_cast<std::size_t>(f[0]) <= snn.net.layers.size(), "invalid_argument",
            "--inject-weight-fault: layer must be in [1, ", snn.net.layers.size(), "]");
    require(f[1] >= 0 && f[2] >= 0, "invalid_argument", "--inject-weight-fault: negative index");
    npu.inject_weight_fault(static_cast<std::size_t>(f[0] - 1), static_cast<std::size_t>(f[1]),
                            static_cast<std::size_t>(f[2]), static_cast<int>(f[3]));
    injected["weight"] = {{"layer", f[0]}, {"post", f[1]}, {"pre", f[2]}, {"delta", f[3]}};
  }
  if (!th_fault.empty()) {
    const auto f = parse_ints(th_fault, 2, "--golden-threshold-delta");
    require(f[0] >= 1 && static_cast<std::size_t>(f[0]) <= golden.layers.size(), "invalid_argument",
            "--golden-threshold-delta: layer must be in [1, ", golden.layers.size(), "]");
    auto& th = golden.layers[static_cast<std::size_t>(f[0] - 1)].threshold;
    th = static_cast<std::int32_t>(std::max<long long>(1, th + f[1]));
    injected["golden_threshold"] = {{"layer", f[0]}, {"delta", f[1]}};
  }
  c.note("scoreboarding " + std::to_string(stream.events.size()) + " events from " + source);
  const auto rep = run_with_scoreboard(npu, golden, stream);
  json payload = to_json(rep);
  payload["stream"] = source;
  payload["injected"] = injected;
  auto m = c.manifest("verify");
  m.inputs.push_back({relative_to(snn.artifact.path, c.out), snn.artifact.manifest.content_hash});
  write_artifact(c.out / "verify.json", seal(payload, m));
  print_json(payload);
  return rep.pass ? 0 : kExitMismatch;
}

// ---------------------------------------------------------------------------
// sweep

int cmd_sweep(Context& c, const std::string& axis, std::optional<std::size_t> trials,
              const std::string& metric_name, double distance) {
  auto& pc = c.cfg.pipeline;
  if (trials) pc.trials = *trials;
  validate(c.cfg);
  const auto templates = load_templates(c.cfg.templates, pc.data.n_channels);
  const auto seeds = trial_seeds(c.g.seed, pc.trials);
  c.note("sweeping " + axis + " over " + std::to_string(seeds.size()) + " trials");
  SweepResult r;
  if (axis == "distance") {
    Metric metric = Metric::kSnn;
    if (metric_name == "ann") metric = Metric::kAnnFloat;
    else if (metric_name == "ann_int8") metric = Metric::kAnnQuantized;
    else require(metric_name == "snn", "invalid_argument", "metric must be snn, ann or ann_int8");
    r = sweep_distance(templates, pc, pc.data.distances_cm, seeds, metric);
  } else if (axis == "hidden_size") {
    r = sweep_hidden_size(templates, pc, pc.hidden_sizes, seeds);
  } else if (axis == "integration_time_ms") {
    require(is_supported_distance(distance), "invalid_argument", "unknown distance ", distance, " cm");
    const auto built = build_trials(templates, pc, seeds);
    r = integration_time_sweep(built, pc, distance);
  } else {
    fail("invalid_argument", "axis must be distance, hidden_size or integration_time_ms");
  }
  r.config_hash = config_hash(c.cfg);
  std::ostringstream csv;
  write_sweep_csv(csv, r);
  const auto base = "sweep_" + r.axis;
  write_text(c.out / (base + ".csv"), csv.str());
  auto m = c.manifest("sweep");
  m.outputs.push_back({base + ".csv", text_hash(csv.str())});
  json payload = to_json(r);
  if (axis == "integration_time_ms") payload["distance_cm"] = distance;
  write_artifact(c.out / (base + ".json"), seal(payload, m));
  std::cout << csv.str();
  return 0;
}

// ---------------------------------------------------------------------------
// report

std::string fmt(double v, int prec = 4) {
  std::ostringstream oss;
  oss << std::fixed << std::setprecision(prec) << v;
  return oss.str();
}

int cmd_report(Context& c) {
  const auto run = load_artifact(c.out / "run.json", "run");
  const auto& r = run.payload;
  std::ostringstream md;
  json payload{{"run", {{"engine", r["engine"]},
                        {"rate_hz", r["rate_hz"]},
                        {"duration_s", r["duration_s"]},
                        {"overall", r["overall"]},
                        {"per_distance", r["per_distance"]}}}};
  auto m = c.manifest("report");
  m.inputs.push_back({"run.json", run.manifest.content_hash});

  md << "# Identification report\n\n";
  md << "Engine " << r["engine"].get<std::string>() << ", " << r["rate_hz"].get<double>() << " Hz input, "
     << r["duration_s"].get<double>() << " s window, split " << r["split"].get<std::string>() << ".\n\n";
  md << "| distance_cm | n | snn_accuracy | ann_accuracy | agreement | early_stop_ms |\n";
  md << "|---|---|---|---|---|---|\n";
  for (const auto& p : r["per_distance"])
    md << "| " << p["distance_cm"].get<double>() << " | " << p["n"].get<std::size_t>() << " | "
       << fmt(p["snn_accuracy"]) << " | " << fmt(p["ann_accuracy"]) << " | " << fmt(p["agreement"])
       << " | " << fmt(p["mean_decision_time_ms"], 1) << " |\n";
  const auto& o = r["overall"];
  md << "| all | " << o["n"].get<std::size_t>() << " | " << fmt(o["snn_accuracy"]) << " | "
     << fmt(o["ann_accuracy"]) << " | " << fmt(o["agreement"]) << " | "
     << fmt(o["mean_decision_time_ms"], 1) << " |\n\n";
  for (const auto& p : r["per_distance"])
    md << "accuracy@" << p["distance_cm"].get<double>() << "cm " << fmt(p["snn_accuracy"]) << "\n";
  md << "\n";
  if (r.contains("activity")) {
    payload["run"]["activity"] = r["activity"];
    md << "NPU busy fraction " << std::scientific << std::setprecision(3)
       << r["activity"]["busy_fraction"].get<double>() << std::defaultfloat << std::setprecision(6) << " over "
       << r["activity"]["total_cycles"].get<std::uint64_t>() << " cycles.\n\n";
  }
  if (fs::exists(c.out / "verify.json")) {
    const auto v = load_artifact(c.out / "verify.json", "verify");
    m.inputs.push_back({"verify.json", v.manifest.content_hash});
    payload["verify"] = v.payload;
    payload["verify"].erase("manifest");
    md << "Scoreboard: " << (v.payload["pass"].get<bool>() ? "pass" : "FAIL") << ", "
       << v.payload["checkpoints"].get<std::size_t>() << " checkpoints.\n\n";
  }
  for (const char* axis : {"distance_cm", "hidden_size", "integration_time_ms"}) {
    const auto p = c.out / (std::string("sweep_") + axis + ".json");
    if (!fs::exists(p)) continue;
    const auto s = load_artifact(p, "sweep");
    m.inputs.push_back({p.filename().string(), s.manifest.content_hash});
    payload["sweeps"][axis] = s.payload;
    payload["sweeps"][axis].erase("manifest");
    md << "## Sweep: " << axis << " (" << s.payload["metric"].get<std::string>() << ")\n\n";
    md << "| " << axis << " | mean | std | n |\n|---|---|---|---|\n";
    for (const auto& pt : s.payload["points"])
      md << "| " << pt["value"].get<double>() << " | " << fmt(pt["mean"]) << " | " << fmt(pt["std"])
         << " | " << pt["n"].get<std::size_t>() << " |\n";
    md << "\n";
  }
  write_text(c.out / "report.md", md.str());
  m.outputs.push_back({"report.md", text_hash(md.str())});
  write_artifact(c.out / "report.json", seal(payload, m));
  std::cout << md.str();
  return 0;
}

void print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-driven spiking-network radioisotope identification toolkit", "radsnn"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--seed", g.seed, "root seed")->capture_default_str();
  app.add_option("--out", g.out, "artifact directory")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "suppress progress messages");

  std::optional<std::size_t> frames, trials;
  std::string streams, path_a, path_b, engine = "golden", split = "test", stream_path, sample, fault,
                                       th_fault, axis, metric = "snn";
  std::vector<double> distances;
  double distance = 10;

  auto* gen = app.add_subcommand("gen", "synthesize the dataset");
  gen->add_option("--frames", frames, "frames per (isotope, distance) condition");
  gen->add_option("--streams", streams, "which event streams to write: none, test, all");
  auto* tr = app.add_subcommand("train", "train the float MLP");
  tr->add_option("--dataset", path_a, "dataset.json (default: <out>/dataset.json)");
  auto* qu = app.add_subcommand("quantize", "int8 post-training quantization");
  qu->add_option("--model", path_a, "model.json (default: <out>/model.json)");
  auto* cv = app.add_subcommand("convert", "convert the quantized MLP to an IF network");
  cv->add_option("--model", path_a, "model_q.json (default: <out>/model_q.json)");
  cv->add_option("--dataset", path_b, "dataset.json for calibration (default: <out>/dataset.json)");
  auto* ru = app.add_subcommand("run", "classify dataset streams");
  ru->add_option("--engine", engine, "golden or npu")->capture_default_str();
  ru->add_option("--split", split, "train, test or all")->capture_default_str();
  ru->add_option("--distance", distances, "restrict to these distances (cm)");
  ru->add_option("--snn", path_a, "snn.json (default: <out>/snn.json)");
  auto* ve = app.add_subcommand("verify", "scoreboard the NPU against the golden model");
  ve->add_option("--snn", path_a, "snn.json (default: <out>/snn.json)");
  ve->add_option("--stream", stream_path, "event stream JSONL (default: first test sample)");
  ve->add_option("--sample", sample, "dataset sample id");
  ve->add_option("--inject-weight-fault", fault, "LAYER:POST:PRE:DELTA, layer 1 = hidden");
  ve->add_option("--golden-threshold-delta", th_fault, "LAYER:DELTA applied to the golden model");
  auto* sw = app.add_subcommand("sweep", "run an experiment sweep");
  sw->add_option("--axis", axis, "distance, hidden_size or integration_time_ms")->required();
  sw->add_option("--trials", trials, "seeds per point");
  sw->add_option("--metric", metric, "distance axis: snn, ann or ann_int8")->capture_default_str();
  sw->add_option("--distance", distance, "integration_time_ms axis: test distance (cm)")
      ->capture_default_str();
  auto* re = app.add_subcommand("report", "summarize artifacts in --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return kExitUsage;
  }

  try {
    Context c = make_context(g);
    fs::create_directories(c.out);
    if (gen->parsed()) return cmd_gen(c, frames, streams);
    if (tr->parsed()) return cmd_train(c, path_a);
    if (qu->parsed()) return cmd_quantize(c, path_a);
    if (cv->parsed()) return cmd_convert(c, path_a, path_b);
    if (ru->parsed()) return cmd_run(c, engine, split, distances, path_a);
    if (ve->parsed()) return cmd_verify(c, path_a, stream_path, sample, fault, th_fault);
    if (sw->parsed()) return cmd_sweep(c, axis, trials, metric, distance);
    if (re->parsed()) return cmd_report(c);
  } catch (const Error& e) {
    print_error(e.code(), e.what());
    return kExitError;
  } catch (const fs::filesystem_error& e) {
    print_error("io_error", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kExitError;
  }
  return kExitUsage;
}
