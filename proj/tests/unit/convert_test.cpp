// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "radsnn/convert.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

namespace radsnn {
namespace {

using testing::error_code_of;
using testing::reference_trial;

QuantizedMlp one_by_one(int w_hidden, int w_out) {
  QuantizedMlp q;
  q.q_hidden = Matrix<std::int8_t>(1, 1, static_cast<std::int8_t>(w_hidden));
  q.q_out = Matrix<std::int8_t>(1, 1, static_cast<std::int8_t>(w_out));
  return q;
}

EnergyHistogram one_channel(std::uint64_t count) {
  EnergyHistogram h;
  h.counts = {count};
  return h;
}

TEST(Percentile, ClosestRankInterpolation) {
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 50), 2.5);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 100), 4);
  EXPECT_DOUBLE_EQ(percentile({7}, 99.9), 7);
  EXPECT_EQ(error_code_of([] { percentile({}, 50); }), "invalid_argument");
}

TEST(Convert, WeightsAreCopiedVerbatim) {
  const auto& t = reference_trial();
  ASSERT_EQ(t.snn.layers.size(), 2u);
  EXPECT_EQ(t.snn.layers[0].weights, t.quantized.q_hidden);
  EXPECT_EQ(t.snn.layers[1].weights, t.quantized.q_out);
  for (const auto& l : t.snn.layers) {
    EXPECT_GE(l.threshold, 1);
    for (auto v : l.membrane) EXPECT_EQ(v, 0);
  }
  EXPECT_EQ(t.snn.accumulator_bits, 24);
}

TEST(Convert, ThresholdsFollowPerEventDrive) {
  // One event always adds 4 to the hidden neuron, which then fires on every
  // event and adds 5 to the output neuron.
  const std::vector<EnergyHistogram> cal{one_channel(10)};
  ConversionConfig cfg;
  const auto net = convert_to_snn(one_by_one(4, 5), cal, cfg, 1);
  EXPECT_EQ(net.layers[0].threshold, 4);
  EXPECT_EQ(net.layers[1].threshold, 5);
  cfg.threshold_headroom = 3;
  const auto wide = convert_to_snn(one_by_one(4, 6), cal, cfg, 1);
  EXPECT_EQ(wide.layers[0].threshold, 12);
  // Hidden now fires every third event: output drive per event is at most
  // 6/3 and above 5/3 for a stream of more than a few events.
  EXPECT_EQ(wide.layers[1].threshold, 6);
}

TEST(Convert, Errors) {
  const std::vector<EnergyHistogram> cal{one_channel(10)};
  EXPECT_EQ(error_code_of([&] { convert_to_snn(one_by_one(-4, 5), cal, {}, 1); }),
            "degenerate_calibration");
  EXPECT_EQ(error_code_of([&] { convert_to_snn(one_by_one(4, -5), cal, {}, 1); }),
            "degenerate_calibration");
  const std::vector<EnergyHistogram> silent{one_channel(0)};
  EXPECT_EQ(error_code_of([&] { convert_to_snn(one_by_one(4, 5), silent, {}, 1); }),
            "degenerate_calibration");
  EXPECT_EQ(error_code_of([&] { convert_to_snn(one_by_one(4, 5), {}, {}, 1); }), "invalid_argument");
  EnergyHistogram two;
  two.counts = {1, 1};
  const std::vector<EnergyHistogram> wrong{two};
  EXPECT_EQ(error_code_of([&] { convert_to_snn(one_by_one(4, 5), wrong, {}, 1); }),
            "dimension_mismatch");
  ConversionConfig bad;
  bad.threshold_percentile = 0;
  EXPECT_EQ(error_code_of([&] { convert_to_snn(one_by_one(4, 5), cal, bad, 1); }), "invalid_config");
  bad = {};
  bad.threshold_headroom = 0;
  EXPECT_EQ(error_code_of([&] { convert_to_snn(one_by_one(4, 5), cal, bad, 1); }), "invalid_config");
}

SnnNetwork single_neuron(int w, std::int32_t theta) {
  SnnNetwork net;
  net.layers.push_back({Matrix<std::int8_t>(1, 1, static_cast<std::int8_t>(w)), theta, {}});
  net.zero_membranes();
  return net;
}

TEST(RateCoding, FiresEveryCeilThetaOverWEvents) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> wd(1, 127);
  std::uniform_int_distribution<std::int32_t> td(1, 2000);
  for (int rep = 0; rep < 200; ++rep) {
    const int w = wd(rng);
    const auto theta = td(rng);
    const auto s = testing::random_stream(rng, 1, 500, 1, 10);
    GoldenModel g(single_neuron(w, theta));
    const auto rec = g.run_stream(s);
    const auto expected = testing::single_neuron_fires(w, theta, s.events.size());
    ASSERT_EQ(rec.layers[1].size(), expected.size());
    for (std::size_t k = 0; k < expected.size(); ++k) {
      EXPECT_EQ(rec.layers[1][k].t_us, s.events[expected[k] - 1].t_us);
      const auto period = static_cast<std::uint64_t>((theta + w - 1) / w);
      EXPECT_EQ(expected[k], (k + 1) * period);
    }
  }
}

TEST(RateCoding, LongRunRateOnPoissonInput) {
  EnergyHistogram h = one_channel(1);
  const double rate = 1000;
  const auto s = histogram_to_event_stream(h, rate, 100, 5);
  ASSERT_GE(s.events.size(), 99'000u);
  GoldenModel g(single_neuron(4, 12));
  const auto rec = g.run_stream(s);
  const double out_rate = static_cast<double>(rec.output_counts[0]) / 100.0;
  const double in_rate = static_cast<double>(s.events.size()) / 100.0;
  EXPECT_NEAR(out_rate, in_rate / 3.0, 0.02 * in_rate / 3.0);
  EXPECT_NEAR(out_rate, rate * 4.0 / 12.0, 0.02 * rate / 3.0);
}

TEST(Convert, DoubleHeadroomNeverAddsOutputSpikes) {
  const auto& t = reference_trial();
  ConversionConfig cfg;
  cfg.threshold_headroom = 2;
  const auto cal = calibration_frames(t.dataset, cfg.calibration_frames, t.seed);
  const auto doubled = convert_to_snn(t.quantized, cal, cfg, derive_seed(t.seed, "convert"));
  EXPECT_GE(doubled.layers[0].threshold, 2 * t.snn.layers[0].threshold - 1);
  GoldenModel base(t.snn), high(doubled);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < t.dataset.test.size(); i += 7) {
    const auto s = sample_stream(t.dataset.samples[t.dataset.test[i]], 500, 3);
    EXPECT_LE(high.run_stream(s).total_output_spikes(), base.run_stream(s).total_output_spikes())
        << "sample " << t.dataset.test[i];
    ++checked;
  }
  EXPECT_GT(checked, 100u);
}

TEST(Fidelity, ZeroDurationGivesNoDecisionEverywhere) {
  const auto& t = reference_trial();
  const auto subset = t.dataset.test_at(10);
  const auto r = rate_fidelity_report(t.quantized, t.snn, t.dataset, subset, 0, 500);
  EXPECT_EQ(r.samples, subset.size());
  EXPECT_EQ(r.no_decision, subset.size());
  EXPECT_EQ(r.agreements, 0u);
  for (int d : r.snn_decisions) EXPECT_EQ(d, kNoDecision);
}

TEST(Fidelity, CraftedOneClassFrame) {
  // Hidden neuron k listens to feature block k; output k listens to hidden k.
  QuantizedMlp q;
  q.q_hidden = Matrix<std::int8_t>(8, 64, 0);
  q.q_out = Matrix<std::int8_t>(8, 8, -10);
  for (std::size_t k = 0; k < 8; ++k) {
    for (std::size_t c = 8 * k; c < 8 * k + 8; ++c) q.q_hidden(k, c) = 100;
    q.q_out(k, k) = 100;
  }
  const auto net = network_from_quantized(q, 150, 150);
  for (std::size_t winner : {0u, 3u, 7u}) {
    Frame f;
    f.isotope = winner;
    f.seed = 17 + winner;
    f.raw.counts.assign(1024, 0);
    for (std::size_t c = 128 * winner; c < 128 * winner + 128; ++c) f.raw.counts[c] = 5;
    const std::vector<Sample> one{make_sample(f, {})};
    const auto r = rate_fidelity_report(q, net, one, 3, 500);
    EXPECT_EQ(r.ann_decisions[0], static_cast<int>(winner));
    EXPECT_EQ(r.snn_decisions[0], static_cast<int>(winner));
    EXPECT_DOUBLE_EQ(r.agreement, 1.0);
  }
}

TEST(Fidelity, TenCentimetreAgreement) {
  const auto& t = reference_trial();
  const auto r = rate_fidelity_report(t.quantized, t.snn, t.dataset, t.dataset.test_at(10), 3, 500);
  EXPECT_GE(r.agreement, 0.95);
  EXPECT_GT(r.mean_rank_correlation, 0.0);
  std::size_t per_class = 0;
  for (auto n : r.class_samples) per_class += n;
  EXPECT_EQ(per_class, r.samples);
}

TEST(Fidelity, ConfidentSamplesConvergeToAnnArgmax) {
  const auto& t = reference_trial();
  const auto ann = dequantize(t.quantized);
  std::vector<std::size_t> confident;
  for (auto i : t.dataset.test) {
    auto p = forward(ann, t.dataset.samples[i].features).probabilities;
    std::sort(p.begin(), p.end());
    if (p[p.size() - 1] - p[p.size() - 2] > 0.2) confident.push_back(i);
  }
  ASSERT_GT(confident.size(), 100u);
  const auto short_window = rate_fidelity_report(t.quantized, t.snn, t.dataset, confident, 0.3, 500);
  const auto long_window = rate_fidelity_report(t.quantized, t.snn, t.dataset, confident, 3, 500);
  EXPECT_GE(long_window.agreement, short_window.agreement);
  EXPECT_GE(long_window.agreement, 0.95);
}

TEST(Ranks, AveragesTies) {
  const std::vector<double> v{3, 1, 2, 1};
  EXPECT_EQ(ranks(v), (std::vector<double>{3, 0.5, 2, 0.5}));
  const std::vector<double> a{1, 2, 3}, b{10, 20, 30}, c{3, 2, 1}, flat{5, 5, 5};
  EXPECT_DOUBLE_EQ(*rank_correlation(a, b), 1.0);
  EXPECT_DOUBLE_EQ(*rank_correlation(a, c), -1.0);
  EXPECT_FALSE(rank_correlation(a, flat).has_value());
}

TEST(SnnFile, RoundTripAndValidation) {
  const auto& t = reference_trial();
  const auto j = nlohmann::json::parse(to_json(t.snn).dump());
  const auto back = snn_from_json(j);
  ASSERT_EQ(back.layers.size(), t.snn.layers.size());
  for (std::size_t l = 0; l < back.layers.size(); ++l) {
    EXPECT_EQ(back.layers[l].weights, t.snn.layers[l].weights);
    EXPECT_EQ(back.layers[l].threshold, t.snn.layers[l].threshold);
  }
  auto bad = j;
  bad["layers"][0]["threshold"] = 0;
  EXPECT_EQ(error_code_of([&] { snn_from_json(bad); }), "invalid_network");
  bad = j;
  bad["layers"][1]["weights"][0].push_back(1);
  EXPECT_EQ(error_code_of([&] { snn_from_json(bad); }), "parse_error");
  bad = j;
  bad["accumulator_bits"] = 40;
  EXPECT_EQ(error_code_of([&] { snn_from_json(bad); }), "invalid_network");
}

}  // namespace
}  // namespace radsnn
