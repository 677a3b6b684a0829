// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "radsnn/ann.hpp"
#include "radsnn/dataset.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

namespace radsnn {
namespace {

using testing::error_code_of;

MlpParams random_params(std::mt19937_64& rng, std::size_t n_in, std::size_t nh, std::size_t no,
                        double sd = 1.0) {
  MlpParams p;
  p.w_hidden = Matrix<double>(nh, n_in);
  p.w_out = Matrix<double>(no, nh);
  std::normal_distribution<double> g(0, sd);
  for (auto& w : p.w_hidden.data()) w = g(rng);
  for (auto& w : p.w_out.data()) w = g(rng);
  return p;
}

MlpParams zero_params(std::size_t n_in, std::size_t nh, std::size_t no) {
  MlpParams p;
  p.w_hidden = Matrix<double>(nh, n_in);
  p.w_out = Matrix<double>(no, nh);
  return p;
}

std::vector<double> random_input(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> x(n);
  for (auto& v : x) v = u(rng);
  return x;
}

// Balanced dataset whose labels carry no information about the features.
LabeledDataset noise_dataset(std::size_t per_class, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LabeledDataset ds;
  for (std::size_t k = 0; k < kNumClasses; ++k) ds.class_names.push_back("c" + std::to_string(k));
  for (std::size_t k = 0; k < kNumClasses; ++k)
    for (std::size_t i = 0; i < per_class; ++i) {
      Sample s;
      s.features = random_input(rng, dim);
      s.label = static_cast<int>(k);
      ds.test.push_back(ds.samples.size());
      ds.train.push_back(ds.samples.size());
      ds.samples.push_back(std::move(s));
    }
  return ds;
}

TEST(Forward, ZeroWeightsAndZeroInputGiveUniform) {
  const auto zero = zero_params(64, 40, 8);
  std::mt19937_64 rng(1);
  for (double p : forward(zero, random_input(rng, 64)).probabilities) EXPECT_DOUBLE_EQ(p, 0.125);
  const auto p = random_params(rng, 64, 40, 8);
  const auto f = forward(p, std::vector<double>(64, 0.0));
  for (double v : f.probabilities) EXPECT_DOUBLE_EQ(v, 0.125);
}

TEST(Forward, MatchesDenseOracle) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    const auto p = random_params(rng, 64, 40, 8, 0.3);
    const auto x = random_input(rng, 64);
    const auto f = forward(p, x);
    const auto o = testing::dense_forward(p, x);
    for (std::size_t j = 0; j < 40; ++j) {
      EXPECT_GE(f.hidden[j], 0.0);
      EXPECT_NEAR(f.hidden[j], o.hidden[j], 1e-9);
    }
    double sum = 0;
    for (std::size_t k = 0; k < 8; ++k) {
      EXPECT_NEAR(f.probabilities[k], o.probabilities[k], 1e-9);
      EXPECT_GT(f.probabilities[k], 0.0);
      EXPECT_LT(f.probabilities[k], 1.0);
      sum += f.probabilities[k];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Forward, DimensionMismatch) {
  std::mt19937_64 rng(3);
  const auto p = random_params(rng, 4, 3, 2);
  EXPECT_EQ(error_code_of([&] { forward(p, std::vector<double>(5, 0.0)); }), "dimension_mismatch");
}

TEST(Gradients, MatchCentralDifferences) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    auto p = random_params(rng, 6, 5, 4, 0.8);
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (int b = 0; b < 7; ++b) {
      xs.push_back(random_input(rng, 6));
      ys.push_back(b % 4);
    }
    std::vector<const std::vector<double>*> ptrs;
    for (const auto& x : xs) ptrs.push_back(&x);
    const auto g = loss_and_gradients(p, ptrs, ys);
    EXPECT_NEAR(g.loss, static_cast<double>(testing::cross_entropy(p, xs, ys)), 1e-10);
    const double h = 1e-5;
    auto check = [&](Matrix<double>& w, const Matrix<double>& grad) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double saved = w.data()[i];
        w.data()[i] = saved + h;
        const long double up = testing::cross_entropy(p, xs, ys);
        w.data()[i] = saved - h;
        const long double down = testing::cross_entropy(p, xs, ys);
        w.data()[i] = saved;
        const double numeric = static_cast<double>((up - down) / (2 * h));
        const double analytic = grad.data()[i];
        const double rel = std::abs(numeric - analytic) / std::max(1e-8, std::abs(numeric) + std::abs(analytic));
        EXPECT_LT(rel, 1e-5) << "entry " << i << " analytic " << analytic << " numeric " << numeric;
      }
    };
    check(p.w_hidden, g.d_hidden);
    check(p.w_out, g.d_out);
  }
}

TEST(Train, LinearlySeparableToy) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 0.3);
  LabeledDataset ds;
  ds.class_names = {"a", "b"};
  for (int i = 0; i < 200; ++i) {
    Sample s;
    s.label = i % 2;
    s.features.resize(8);
    for (auto& v : s.features) v = u(rng);
    s.features[static_cast<std::size_t>(s.label)] += 1.0;
    ds.train.push_back(ds.samples.size());
    ds.samples.push_back(std::move(s));
  }
  TrainConfig cfg;
  cfg.n_hidden = 8;
  cfg.epochs = 200;
  cfg.learning_rate = 0.1;
  const auto p = train(ds, cfg, 9);
  EXPECT_GE(*p.train_accuracy, 0.99);
  EXPECT_FALSE(p.test_accuracy.has_value());
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  const auto ds = noise_dataset(100, 16, 6);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto p = train(ds, cfg, 77);
  const auto init = init_params(16, cfg.n_hidden, 8, cfg.init_gain, derive_seed(77, "ann.init"));
  EXPECT_EQ(p.w_hidden, init.w_hidden);
  EXPECT_EQ(p.w_out, init.w_out);
  const double sigma = std::sqrt(0.125 * 0.875 / 800.0);
  EXPECT_NEAR(*p.train_accuracy, 0.125, 4 * sigma);
}

TEST(Train, DeterministicInSeed) {
  const auto ds = noise_dataset(20, 8, 7);
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto a = train(ds, cfg, 3), b = train(ds, cfg, 3), c = train(ds, cfg, 4);
  EXPECT_EQ(a.w_hidden, b.w_hidden);
  EXPECT_EQ(a.w_out, b.w_out);
  EXPECT_NE(a.w_hidden, c.w_hidden);
}

TEST(Train, Errors) {
  LabeledDataset empty;
  EXPECT_EQ(error_code_of([&] { train(empty, {}, 1); }), "empty_dataset");
  auto ds = noise_dataset(2, 8, 1);
  ds.samples[3].features.pop_back();
  EXPECT_EQ(error_code_of([&] { train(ds, {}, 1); }), "invalid_dataset");
}

TEST(Train, TenCentimetreFramesAreLearned) {
  DatasetConfig cfg;
  cfg.distances_cm = {10};
  const auto ds = build_dataset(testing::shipped_templates(), cfg, 11);
  const auto p = train(ds, {}, 12);
  EXPECT_GE(*p.test_accuracy, 0.97);
}

TEST(Train, NearFramesBeatFarFramesOverSeeds) {
  const auto iso = testing::shipped_templates();
  DatasetConfig cfg;
  cfg.frames_per_condition = 40;
  double near = 0, far = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    const auto ds = build_dataset(iso, cfg, 100 + static_cast<std::uint64_t>(s));
    TrainConfig tc;
    tc.epochs = 40;
    const auto p = train(ds, tc, 200 + static_cast<std::uint64_t>(s));
    near += evaluate(p, ds, ds.test_at(10)).accuracy / seeds;
    far += evaluate(p, ds, ds.test_at(150)).accuracy / seeds;
  }
  EXPECT_GE(near, far);
  EXPECT_GT(near, 0.95);
}

TEST(Evaluate, OracleAndConstantClassifiers) {
  LabeledDataset ds;
  for (std::size_t k = 0; k < 8; ++k) ds.class_names.push_back("c");
  for (int i = 0; i < 80; ++i) {
    Sample s;
    s.label = i % 8;
    s.features.assign(8, 0.0);
    s.features[static_cast<std::size_t>(s.label)] = 1.0;
    ds.test.push_back(ds.samples.size());
    ds.samples.push_back(std::move(s));
  }
  const auto oracle = evaluate_with([](const Sample& s) { return argmax(s.features); }, ds, ds.test);
  EXPECT_DOUBLE_EQ(oracle.accuracy, 1.0);
  const auto constant = evaluate_with([](const Sample&) { return 3; }, ds, ds.test);
  EXPECT_DOUBLE_EQ(constant.accuracy, 0.125);
  for (std::size_t r = 0; r < 8; ++r) {
    std::size_t row = 0;
    for (std::size_t c = 0; c < 8; ++c) row += constant.confusion(r, c);
    EXPECT_EQ(row, 10u);
    EXPECT_EQ(constant.confusion(r, 3), 10u);
  }
}

TEST(Evaluate, NoDecisionCountsAsWrongAndRowsStillSum) {
  const std::vector<int> pred{kNoDecision, 1, 0, kNoDecision};
  const std::vector<int> labels{0, 1, 1, 1};
  const auto r = evaluate(pred, labels, 2);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.25);
  EXPECT_EQ(r.confusion(1, 0) + r.confusion(1, 1) + r.no_decision[1], 3u);
  EXPECT_EQ(r.confusion(0, 0) + r.confusion(0, 1) + r.no_decision[0], 1u);
}

TEST(Evaluate, EmptySubsetIsAnError) {
  const auto ds = noise_dataset(1, 4, 1);
  std::vector<std::size_t> none;
  EXPECT_EQ(error_code_of([&] { evaluate(zero_params(4, 2, 8), ds, none); }),
            "empty_subset");
}

TEST(Quantize, ForcedArithmetic) {
  MlpParams p;
  p.w_hidden = Matrix<double>(1, 3);
  p.w_hidden(0, 0) = 1.27;
  p.w_hidden(0, 1) = 0.50;
  p.w_hidden(0, 2) = -1.27;
  p.w_out = Matrix<double>(1, 1);
  p.w_out(0, 0) = -2.0;
  const auto q = quantize(p);
  EXPECT_NEAR(q.scale_hidden, 0.01, 1e-15);
  EXPECT_EQ(q.q_hidden(0, 0), 127);
  EXPECT_EQ(q.q_hidden(0, 1), 50);
  EXPECT_EQ(q.q_hidden(0, 2), -127);
  EXPECT_EQ(q.q_out(0, 0), -127);
}

TEST(Quantize, ErrorBoundAndRange) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    const auto p = random_params(rng, 64, 40, 8, 0.2);
    const auto q = quantize(p);
    auto check = [](const Matrix<double>& w, const Matrix<std::int8_t>& qw, double s) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        EXPECT_GE(qw.data()[i], -127);
        EXPECT_LE(qw.data()[i], 127);
        EXPECT_LE(std::abs(w.data()[i] - s * qw.data()[i]), s / 2 + 1e-15);
      }
    };
    check(p.w_hidden, q.q_hidden, q.scale_hidden);
    check(p.w_out, q.q_out, q.scale_out);
    const auto d = dequantize(q);
    EXPECT_DOUBLE_EQ(d.w_hidden(0, 0), q.scale_hidden * q.q_hidden(0, 0));
  }
}

TEST(Quantize, AllZeroLayerIsAnError) {
  auto p = zero_params(2, 2, 2);
  p.w_out(0, 0) = 1;
  EXPECT_EQ(error_code_of([&] { quantize(p); }), "degenerate_layer");
}

TEST(Quantize, AccuracyDriftIsSmall) {
  const auto ds = build_dataset(testing::shipped_templates(), {}, 21);
  const auto p = train(ds, {}, 22);
  const auto q = quantize(p);
  EXPECT_LE(std::abs(evaluate(p, ds, ds.test).accuracy - evaluate(q, ds, ds.test).accuracy), 0.01);
}

TEST(ModelFile, RoundTrip) {
  std::mt19937_64 rng(14);
  auto p = random_params(rng, 6, 4, 8);
  p.seed = 0xfedcba9876543210ull;
  p.train_accuracy = 0.5;
  const auto q = quantize(p);
  const auto j = nlohmann::json::parse(to_json(p, q).dump());
  const auto p2 = mlp_from_json(j);
  EXPECT_EQ(p2.w_hidden, p.w_hidden);
  EXPECT_EQ(p2.w_out, p.w_out);
  EXPECT_EQ(p2.seed, p.seed);
  EXPECT_EQ(p2.train_accuracy, p.train_accuracy);
  const auto q2 = quantized_from_json(j);
  EXPECT_EQ(q2.q_hidden, q.q_hidden);
  EXPECT_EQ(q2.q_out, q.q_out);
  EXPECT_DOUBLE_EQ(q2.scale_hidden, q.scale_hidden);
  auto bad = j;
  bad["quantized"]["q_out"][0][0] = 128;
  EXPECT_EQ(error_code_of([&] { quantized_from_json(bad); }), "parse_error");
  EXPECT_EQ(error_code_of([&] { quantized_from_json(to_json(p)); }), "parse_error");
}

}  // namespace
}  // namespace radsnn
