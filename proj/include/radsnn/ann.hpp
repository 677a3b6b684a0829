// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Frame-based classifier: a bias-free two-layer perceptron
// (input -> ReLU hidden -> softmax output) trained with mini-batch SGD and
// momentum, plus symmetric per-layer int8 post-training quantization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "radsnn/error.hpp"
#include "radsnn/matrix.hpp"
#include "radsnn/rng.hpp"
#include "radsnn/spectra.hpp"

namespace radsnn {

inline constexpr std::size_t kNumClasses = 8;
inline constexpr int kNoDecision = -1;

struct Sample {
  std::vector<double> features;  // normalized, rebinned frame
  int label = 0;
  double distance_cm = 0;
  std::size_t frame = 0;
  EnergyHistogram counts;        // rebinned counts
  EnergyHistogram raw_counts;    // detector channels, source of event streams
  std::uint64_t seed = 0;        // per-frame seed (stream synthesis derives from it)
};

struct LabeledDataset {
  std::vector<Sample> samples;
  std::vector<std::size_t> train;  // indices into samples
  std::vector<std::size_t> test;
  std::vector<std::string> class_names;

  std::size_t n_classes() const {
    return class_names.empty() ? kNumClasses : class_names.size();
  }
  std::size_t n_features() const {
    return samples.empty() ? 0 : samples.front().features.size();
  }
  std::vector<std::size_t> test_at(double distance_cm) const {
    std::vector<std::size_t> out;
    for (auto i : test)
      if (samples[i].distance_cm == distance_cm) out.push_back(i);
    return out;
  }
};

inline void validate(const LabeledDataset& ds) {
  const auto n = ds.n_classes();
  const auto dim = ds.n_features();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    require(s.label >= 0 && static_cast<std::size_t>(s.label) < n, "invalid_dataset",
            "sample ", i, ": label ", s.label, " out of range");
    require(s.features.size() == dim, "invalid_dataset", "sample ", i,
            ": feature length ", s.features.size(), " != ", dim);
  }
  for (auto idx : ds.train) require(idx < ds.samples.size(), "invalid_dataset", "bad train index");
  for (auto idx : ds.test) require(idx < ds.samples.size(), "invalid_dataset", "bad test index");
}

struct MlpParams {
  Matrix<double> w_hidden;  // [n_hidden x n_in]
  Matrix<double> w_out;     // [n_out x n_hidden]
  std::uint64_t seed = 0;
  std::optional<double> train_accuracy;
  std::optional<double> test_accuracy;

  std::size_t n_in() const { return w_hidden.cols(); }
  std::size_t n_hidden() const { return w_hidden.rows(); }
  std::size_t n_out() const { return w_out.rows(); }
};

struct QuantizedMlp {
  Matrix<std::int8_t> q_hidden;
  Matrix<std::int8_t> q_out;
  double scale_hidden = 1;
  double scale_out = 1;

  std::size_t n_in() const { return q_hidden.cols(); }
  std::size_t n_hidden() const { return q_hidden.rows(); }
  std::size_t n_out() const { return q_out.rows(); }
};

struct TrainConfig {
  std::size_t n_hidden = 40;
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  double learning_rate = 0.5;
  double momentum = 0.9;
  double lr_decay = 0.5;         // multiplied in every lr_step_epochs
  std::size_t lr_step_epochs = 20;
  double init_gain = 1.0;        // scales the He-normal initialization
};

// ---------------------------------------------------------------------------
// Inference

struct ForwardResult {
  std::vector<double> probabilities;
  std::vector<double> hidden;  // post-ReLU
  std::vector<double> logits;
};

inline void softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

inline ForwardResult forward(const MlpParams& p, std::span<const double> x) {
  require(x.size() == p.n_in(), "dimension_mismatch", "input length ", x.size(),
          " != n_in ", p.n_in());
  ForwardResult r;
  r.hidden.assign(p.n_hidden(), 0.0);
  for (std::size_t j = 0; j < p.n_hidden(); ++j) {
    double a = 0;
    const auto w = p.w_hidden.row(j);
    for (std::size_t i = 0; i < x.size(); ++i) a += w[i] * x[i];
    r.hidden[j] = a > 0 ? a : 0.0;
  }
  r.logits.assign(p.n_out(), 0.0);
  for (std::size_t k = 0; k < p.n_out(); ++k) {
    double z = 0;
    const auto w = p.w_out.row(k);
    for (std::size_t j = 0; j < r.hidden.size(); ++j) z += w[j] * r.hidden[j];
    r.logits[k] = z;
  }
  r.probabilities = r.logits;
  softmax_inplace(r.probabilities);
  return r;
}

inline int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline int predict(const MlpParams& p, std::span<const double> x) {
  return argmax(forward(p, x).logits);
}

// ---------------------------------------------------------------------------
// Loss and gradients (mean cross-entropy over the batch)

struct Gradients {
  double loss = 0;
  Matrix<double> d_hidden;
  Matrix<double> d_out;
};

inline Gradients loss_and_gradients(const MlpParams& p,
                                    std::span<const std::vector<double>* const> xs,
                                    std::span<const int> labels) {
  require(xs.size() == labels.size() && !xs.empty(), "invalid_argument",
          "batch inputs and labels must be nonempty and of equal length");
  Gradients g{0, Matrix<double>(p.n_hidden(), p.n_in()), Matrix<double>(p.n_out(), p.n_hidden())};
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  std::vector<double> delta_out(p.n_out());
  std::vector<double> delta_hidden(p.n_hidden());
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const auto& x = *xs[b];
    const auto f = forward(p, x);
    const auto y = static_cast<std::size_t>(labels[b]);
    g.loss -= std::log(std::max(f.probabilities[y], std::numeric_limits<double>::min())) * inv_n;
    for (std::size_t k = 0; k < p.n_out(); ++k)
      delta_out[k] = (f.probabilities[k] - (k == y ? 1.0 : 0.0)) * inv_n;
    for (std::size_t k = 0; k < p.n_out(); ++k) {
      auto gr = g.d_out.row(k);
      for (std::size_t j = 0; j < p.n_hidden(); ++j) gr[j] += delta_out[k] * f.hidden[j];
    }
    for (std::size_t j = 0; j < p.n_hidden(); ++j) {
      double s = 0;
      if (f.hidden[j] > 0)
        for (std::size_t k = 0; k < p.n_out(); ++k) s += p.w_out(k, j) * delta_out[k];
      delta_hidden[j] = s;
    }
    for (std::size_t j = 0; j < p.n_hidden(); ++j) {
      if (delta_hidden[j] == 0) continue;
      auto gr = g.d_hidden.row(j);
      for (std::size_t i = 0; i < x.size(); ++i) gr[i] += delta_hidden[j] * x[i];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0;
  Matrix<std::size_t> confusion;         // [true x predicted]
  std::vector<std::size_t> no_decision;  // per true class
};

// "No decision" (kNoDecision) counts as incorrect.
inline EvalResult evaluate(std::span<const int> predicted, std::span<const int> labels,
                           std::size_t n_classes = kNumClasses) {
  require(!labels.empty(), "empty_subset", "cannot evaluate an empty subset");
  require(predicted.size() == labels.size(), "invalid_argument",
          "prediction and label counts differ");
  EvalResult r;
  r.total = labels.size();
  r.confusion = Matrix<std::size_t>(n_classes, n_classes, 0);
  r.no_decision.assign(n_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (predicted[i] == kNoDecision) {
      ++r.no_decision[y];
      continue;
    }
    ++r.confusion(y, static_cast<std::size_t>(predicted[i]));
    if (predicted[i] == labels[i]) ++r.correct;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

template <typename Classifier>
EvalResult evaluate_with(Classifier&& classify, const LabeledDataset& ds,
                    std::span<const std::size_t> subset) {
  std::vector<int> pred, labels;
  pred.reserve(subset.size());
  labels.reserve(subset.size());
  for (auto i : subset) {
    pred.push_back(classify(ds.samples[i]));
    labels.push_back(ds.samples[i].label);
  }
  return evaluate(pred, labels, ds.n_classes());
}

inline EvalResult evaluate(const MlpParams& p, const LabeledDataset& ds,
                           std::span<const std::size_t> subset) {
  return evaluate_with([&](const Sample& s) { return predict(p, s.features); }, ds, subset);
}

// ---------------------------------------------------------------------------
// Training

inline MlpParams init_params(std::size_t n_in, std::size_t n_hidden, std::size_t n_out,
                             double gain, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  MlpParams p;
  p.seed = seed;
  p.w_hidden = Matrix<double>(n_hidden, n_in);
  p.w_out = Matrix<double>(n_out, n_hidden);
  std::normal_distribution<double> nh(0.0, gain * std::sqrt(2.0 / static_cast<double>(n_in)));
  for (double& w : p.w_hidden.data()) w = nh(rng);
  std::normal_distribution<double> no(0.0, gain * std::sqrt(2.0 / static_cast<double>(n_hidden)));
  for (double& w : p.w_out.data()) w = no(rng);
  return p;
}

inline MlpParams train(const LabeledDataset& ds, const TrainConfig& cfg, std::uint64_t seed) {
  validate(ds);
  require(!ds.train.empty(), "empty_dataset", "training split is empty");
  require(cfg.n_hidden > 0 && cfg.batch_size > 0, "invalid_config",
          "n_hidden and batch_size must be positive");

  MlpParams p = init_params(ds.n_features(), cfg.n_hidden, ds.n_classes(), cfg.init_gain,
                            derive_seed(seed, "ann.init"));
  Rng rng = make_rng(derive_seed(seed, "ann.shuffle"));
  Matrix<double> vel_h(p.n_hidden(), p.n_in()), vel_o(p.n_out(), p.n_hidden());
  std::vector<std::size_t> order = ds.train;
  std::vector<const std::vector<double>*> xs;
  std::vector<int> ys;
  double lr = cfg.learning_rate;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch > 0 && cfg.lr_step_epochs > 0 && epoch % cfg.lr_step_epochs == 0) lr *= cfg.lr_decay;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto end = std::min(order.size(), start + cfg.batch_size);
      xs.clear();
      ys.clear();
      for (auto k = start; k < end; ++k) {
        xs.push_back(&ds.samples[order[k]].features);
        ys.push_back(ds.samples[order[k]].label);
      }
      const auto g = loss_and_gradients(p, xs, ys);
      auto step = [&](Matrix<double>& w, Matrix<double>& v, const Matrix<double>& d) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          v.data()[i] = cfg.momentum * v.data()[i] - lr * d.data()[i];
          w.data()[i] += v.data()[i];
        }
      };
      step(p.w_hidden, vel_h, g.d_hidden);
      step(p.w_out, vel_o, g.d_out);
    }
  }

  p.train_accuracy = evaluate(p, ds, ds.train).accuracy;
  if (!ds.test.empty()) p.test_accuracy = evaluate(p, ds, ds.test).accuracy;
  return p;
}

// ---------------------------------------------------------------------------
// Quantization

inline double symmetric_scale(const Matrix<double>& w, const char* layer) {
  double m = 0;
  for (double v : w.data()) {
    require(std::isfinite(v), "invalid_argument", layer, ": non-finite weight");
    m = std::max(m, std::abs(v));
  }
  require(m > 0, "degenerate_layer", layer, ": all-zero layer, scale undefined");
  return m / 127.0;
}

inline Matrix<std::int8_t> quantize_layer(const Matrix<double>& w, double scale) {
  Matrix<std::int8_t> q(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double r = std::round(w.data()[i] / scale);
    q.data()[i] = static_cast<std::int8_t>(std::clamp(r, -127.0, 127.0));
  }
  return q;
}

inline QuantizedMlp quantize(const MlpParams& p) {
  QuantizedMlp q;
  q.scale_hidden = symmetric_scale(p.w_hidden, "hidden");
  q.scale_out = symmetric_scale(p.w_out, "output");
  q.q_hidden = quantize_layer(p.w_hidden, q.scale_hidden);
  q.q_out = quantize_layer(p.w_out, q.scale_out);
  return q;
}

inline MlpParams dequantize(const QuantizedMlp& q) {
  MlpParams p;
  p.w_hidden = Matrix<double>(q.n_hidden(), q.n_in());
  p.w_out = Matrix<double>(q.n_out(), q.n_hidden());
  for (std::size_t i = 0; i < p.w_hidden.size(); ++i)
    p.w_hidden.data()[i] = q.scale_hidden * q.q_hidden.data()[i];
  for (std::size_t i = 0; i < p.w_out.size(); ++i)
    p.w_out.data()[i] = q.scale_out * q.q_out.data()[i];
  return p;
}

inline EvalResult evaluate(const QuantizedMlp& q, const LabeledDataset& ds,
                           std::span<const std::size_t> subset) {
  return evaluate(dequantize(q), ds, subset);
}

// ---------------------------------------------------------------------------
// Model file payload (manifest is attached by the caller)

inline nlohmann::json to_json(const MlpParams& p) {
  nlohmann::json j{{"n_in", p.n_in()},
                   {"n_hidden", p.n_hidden()},
                   {"n_out", p.n_out()},
                   {"seed", p.seed},
                   {"w_hidden", matrix_to_json(p.w_hidden)},
                   {"w_out", matrix_to_json(p.w_out)}};
  if (p.train_accuracy) j["train_accuracy"] = *p.train_accuracy;
  if (p.test_accuracy) j["test_accuracy"] = *p.test_accuracy;
  return j;
}

inline nlohmann::json to_json(const MlpParams& p, const QuantizedMlp& q) {
  auto j = to_json(p);
  j["quantized"] = {{"q_hidden", matrix_to_json(q.q_hidden)},
                    {"q_out", matrix_to_json(q.q_out)},
                    {"scale_hidden", q.scale_hidden},
                    {"scale_out", q.scale_out}};
  return j;
}

inline MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpParams p;
  try {
    p.w_hidden = matrix_from_json<double>(j.at("w_hidden"), "w_hidden");
    p.w_out = matrix_from_json<double>(j.at("w_out"), "w_out");
    p.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("train_accuracy")) p.train_accuracy = j["train_accuracy"].get<double>();
    if (j.contains("test_accuracy")) p.test_accuracy = j["test_accuracy"].get<double>();
    require(p.n_in() == j.at("n_in").get<std::size_t>() &&
                p.n_hidden() == j.at("n_hidden").get<std::size_t>() &&
                p.n_out() == j.at("n_out").get<std::size_t>() &&
                p.w_out.cols() == p.n_hidden(),
            "parse_error", "model dimensions are inconsistent");
  } catch (const nlohmann::json::exception& e) {
    fail("parse_error", "model: ", e.what());
  }
  return p;
}

inline QuantizedMlp quantized_from_json(const nlohmann::json& j) {
  QuantizedMlp q;
  require(j.contains("quantized"), "parse_error", "model file has no quantized section");
  try {
    const auto& s = j.at("quantized");
    q.q_hidden = matrix_from_json<std::int8_t, int>(s.at("q_hidden"), "q_hidden");
    q.q_out = matrix_from_json<std::int8_t, int>(s.at("q_out"), "q_out");
    q.scale_hidden = s.at("scale_hidden").get<double>();
    q.scale_out = s.at("scale_out").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail("parse_error", "quantized model: ", e.what());
  }
  for (auto v : q.q_hidden.data())
    require(v >= -127, "parse_error", "int8 weight outside [-127, 127]");
  for (auto v : q.q_out.data())
    require(v >= -127, "parse_error", "int8 weight outside [-127, 127]");
  require(q.scale_hidden > 0 && q.scale_out > 0, "parse_error", "scales must be positive");
  return q;
}

}  // namespace radsnn
