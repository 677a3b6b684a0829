// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Independent reference implementations and fixtures shared by the unit and
// acceptance suites. Nothing here calls into the code it is used to check,
// except for plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "radsnn/ann.hpp"
#include "radsnn/snn_network.hpp"
#include "radsnn/spectra.hpp"

namespace radsnn::testing {

// Pearson statistic against expected probabilities; returns the upper tail
// probability.
inline double chi_square_p_value(const std::vector<std::uint64_t>& observed,
                                 const std::vector<double>& expected_p) {
  double n = 0;
  for (auto o : observed) n += static_cast<double>(o);
  double stat = 0;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected_p[i] <= 0) continue;
    const double e = n * expected_p[i];
    stat += (static_cast<double>(observed[i]) - e) * (static_cast<double>(observed[i]) - e) / e;
    ++cells;
  }
  boost::math::chi_squared dist(static_cast<double>(cells - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// Plain triple-loop forward pass.
struct DenseForward {
  std::vector<double> hidden, logits, probabilities;
};

inline DenseForward dense_forward(const MlpParams& p, const std::vector<double>& x) {
  DenseForward f;
  const std::size_t nh = p.w_hidden.rows(), ni = p.w_hidden.cols(), no = p.w_out.rows();
  f.hidden.assign(nh, 0.0);
  for (std::size_t j = 0; j < nh; ++j) {
    long double s = 0;
    for (std::size_t i = 0; i < ni; ++i) s += static_cast<long double>(p.w_hidden(j, i)) * x[i];
    f.hidden[j] = s > 0 ? static_cast<double>(s) : 0.0;
  }
  f.logits.assign(no, 0.0);
  for (std::size_t k = 0; k < no; ++k) {
    long double s = 0;
    for (std::size_t j = 0; j < nh; ++j) s += static_cast<long double>(p.w_out(k, j)) * f.hidden[j];
    f.logits[k] = static_cast<double>(s);
  }
  long double z = 0;
  for (double l : f.logits) z += std::exp(static_cast<long double>(l));
  for (double l : f.logits) f.probabilities.push_back(static_cast<double>(std::exp(static_cast<long double>(l)) / z));
  return f;
}

// Mean cross-entropy carried entirely in long double so that finite
// differences of it stay well below the tolerance of a gradient check.
inline long double cross_entropy(const MlpParams& p, const std::vector<std::vector<double>>& xs,
                                 const std::vector<int>& ys) {
  const std::size_t nh = p.w_hidden.rows(), ni = p.w_hidden.cols(), no = p.w_out.rows();
  long double loss = 0;
  for (std::size_t n = 0; n < xs.size(); ++n) {
    std::vector<long double> h(nh, 0), z(no, 0);
    for (std::size_t j = 0; j < nh; ++j) {
      for (std::size_t i = 0; i < ni; ++i) h[j] += static_cast<long double>(p.w_hidden(j, i)) * xs[n][i];
      if (h[j] < 0) h[j] = 0;
    }
    long double m = -std::numeric_limits<long double>::infinity();
    for (std::size_t k = 0; k < no; ++k) {
      for (std::size_t j = 0; j < nh; ++j) z[k] += static_cast<long double>(p.w_out(k, j)) * h[j];
      m = std::max(m, z[k]);
    }
    long double sum = 0;
    for (auto v : z) sum += std::exp(v - m);
    loss += m + std::log(sum) - z[static_cast<std::size_t>(ys[n])];
  }
  return loss / static_cast<long double>(xs.size());
}

inline constexpr std::int64_t kDenseLeak = 0;

inline std::int32_t saturate(std::int64_t v, int bits) {
  const std::int64_t hi = (std::int64_t{1} << (bits - 1)) - 1, lo = -(std::int64_t{1} << (bits - 1));
  return static_cast<std::int32_t>(std::clamp(v, lo, hi));
}

// Dense time-stepped IF simulation: every 1 us step t, every layer computes
// V(t) = V(t-1) + sum_i w_i x_i(t) - L with x a 0/1 vector, then fires and
// resets. The input vector at a step is one-hot (or zero); a layer that
// receives several spikes in one step sees them as successive one-hot
// micro-steps in ascending source order, the way an AER link serializes them.
struct DenseResult {
  std::vector<std::vector<std::int32_t>> membranes;
  std::vector<std::vector<std::uint64_t>> spike_counts;  // per network layer
  std::vector<std::vector<std::uint32_t>> output_sequence;  // output neurons per input event
};

inline DenseResult dense_simulation(const SnnNetwork& net, const EventStream& stream) {
  DenseResult r;
  for (const auto& l : net.layers) {
    r.membranes.emplace_back(l.weights.rows(), 0);
    r.spike_counts.emplace_back(l.weights.rows(), 0);
  }
  std::size_t e = 0;
  const std::uint64_t end = stream.events.empty() ? 0 : stream.events.back().t_us + 1;
  for (std::uint64_t t = 0; t < end; ++t) {
    std::vector<std::uint32_t> sources;
    if (e < stream.events.size() && stream.events[e].t_us == t) sources.push_back(stream.events[e++].channel);
    else continue;  // x(t) = 0 everywhere: V(t) = V(t-1) with L = 0
    std::vector<std::uint32_t> out_this_event;
    // Process a source spike through the remaining layers.
    std::function<void(std::size_t, std::uint32_t)> step = [&](std::size_t layer, std::uint32_t src) {
      const auto& l = net.layers[layer];
      std::vector<double> x(l.weights.cols(), 0.0);
      x[src] = 1.0;
      for (std::size_t j = 0; j < l.weights.rows(); ++j) {
        std::int64_t sum = 0;
        for (std::size_t i = 0; i < l.weights.cols(); ++i)
          sum += static_cast<std::int64_t>(l.weights(j, i)) * static_cast<std::int64_t>(x[i]);
        auto& v = r.membranes[layer][j];
        v = saturate(static_cast<std::int64_t>(v) + sum - kDenseLeak, net.accumulator_bits);
        if (v >= l.threshold) {
          v = 0;
          ++r.spike_counts[layer][j];
          if (layer + 1 < net.layers.size()) step(layer + 1, static_cast<std::uint32_t>(j));
          else out_this_event.push_back(static_cast<std::uint32_t>(j));
        }
      }
    };
    for (auto s : sources) step(0, s);
    r.output_sequence.push_back(std::move(out_this_event));
  }
  return r;
}

// Random integer IF network.
inline SnnNetwork random_network(std::mt19937_64& rng, std::vector<std::size_t> sizes,
                                 int wmin = -127, int wmax = 127, std::int32_t th_min = 20,
                                 std::int32_t th_max = 400, int bits = 24) {
  SnnNetwork net;
  net.accumulator_bits = bits;
  std::uniform_int_distribution<int> w(wmin, wmax);
  std::uniform_int_distribution<std::int32_t> th(th_min, th_max);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    SnnLayer layer;
    layer.weights = Matrix<std::int8_t>(sizes[l + 1], sizes[l]);
    for (auto& v : layer.weights.data()) v = static_cast<std::int8_t>(w(rng));
    layer.threshold = th(rng);
    net.layers.push_back(std::move(layer));
  }
  net.zero_membranes();
  return net;
}

// Random stream with gaps drawn uniformly from [min_gap, max_gap] us.
inline EventStream random_stream(std::mt19937_64& rng, std::uint32_t n_channels, std::size_t n_events,
                                 std::uint64_t min_gap = 1, std::uint64_t max_gap = 2000) {
  EventStream s;
  s.n_channels = n_channels;
  std::uniform_int_distribution<std::uint64_t> gap(min_gap, max_gap);
  std::uniform_int_distribution<std::uint32_t> ch(0, n_channels - 1);
  std::uint64_t t = gap(rng) - 1;
  for (std::size_t i = 0; i < n_events; ++i) {
    s.events.push_back({t, ch(rng)});
    t += gap(rng);
  }
  s.duration_us = t;
  return s;
}

// Single IF neuron, single synapse, no leak, hard reset: spike indices
// (1-based event count at which each fire happens).
inline std::vector<std::uint64_t> single_neuron_fires(std::int64_t w, std::int64_t theta,
                                                      std::uint64_t n_events) {
  std::vector<std::uint64_t> fires;
  std::int64_t v = 0;
  for (std::uint64_t k = 1; k <= n_events; ++k) {
    v += w;
    if (v >= theta) {
      fires.push_back(k);
      v = 0;
    }
  }
  return fires;
}

}  // namespace radsnn::testing
