// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "radsnn/error.hpp"
#include "radsnn/matrix.hpp"

namespace radsnn {

inline constexpr int kDefaultAccumulatorBits = 24;

// Saturating signed accumulator of configurable width (<= 32 bits).
struct Accumulator {
  int bits = kDefaultAccumulatorBits;

  std::int32_t max() const { return static_cast<std::int32_t>((std::int64_t{1} << (bits - 1)) - 1); }
  std::int32_t min() const { return static_cast<std::int32_t>(-(std::int64_t{1} << (bits - 1))); }

  std::int32_t add(std::int32_t v, std::int32_t w) const {
    const std::int64_t s = std::int64_t{v} + w;
    return static_cast<std::int32_t>(std::clamp<std::int64_t>(s, min(), max()));
  }
};

struct SnnLayer {
  Matrix<std::int8_t> weights;  // [n_post x n_pre]
  std::int32_t threshold = 1;
  std::vector<std::int32_t> membrane;

  std::size_t n_pre() const { return weights.cols(); }
  std::size_t n_post() const { return weights.rows(); }
};

// Non-leaky integer integrate-and-fire network. layers.front() receives the
// input AER events, layers.back() is the classification layer.
struct SnnNetwork {
  std::vector<SnnLayer> layers;
  int accumulator_bits = kDefaultAccumulatorBits;

  Accumulator accumulator() const { return {accumulator_bits}; }
  std::size_t n_in() const { return layers.front().n_pre(); }
  std::size_t n_out() const { return layers.back().n_post(); }

  void zero_membranes() {
    for (auto& l : layers) l.membrane.assign(l.n_post(), 0);
  }
};

inline void validate(const SnnNetwork& net) {
  require(!net.layers.empty(), "invalid_network", "network has no layers");
  require(net.accumulator_bits >= 9 && net.accumulator_bits <= 32, "invalid_network",
          "accumulator width ", net.accumulator_bits, " outside [9, 32]");
  const auto acc = net.accumulator();
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    require(layer.n_post() > 0 && layer.n_pre() > 0, "invalid_network", "layer ", l, " is empty");
    require(l == 0 || layer.n_pre() == net.layers[l - 1].n_post(), "invalid_network",
            "layer ", l, " fan-in does not match previous layer");
    require(layer.threshold >= 1 && layer.threshold <= acc.max(), "invalid_network", "layer ", l,
            ": threshold ", layer.threshold, " outside [1, accumulator max]");
    for (auto w : layer.weights.data())
      require(w >= -127, "invalid_network", "layer ", l, ": weight outside [-127, 127]");
    require(layer.membrane.size() == layer.n_post(), "invalid_network", "layer ", l,
            ": membrane vector has wrong length");
    for (auto v : layer.membrane)
      require(v >= acc.min() && v <= acc.max(), "invalid_network", "layer ", l,
              ": membrane outside accumulator range");
  }
}

inline nlohmann::json to_json(const SnnNetwork& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers)
    layers.push_back({{"weights", matrix_to_json(l.weights)}, {"threshold", l.threshold}});
  return {{"accumulator_bits", net.accumulator_bits}, {"layers", layers}};
}

inline SnnNetwork snn_from_json(const nlohmann::json& j) {
  SnnNetwork net;
  try {
    net.accumulator_bits = j.at("accumulator_bits").get<int>();
    for (const auto& lj : j.at("layers")) {
      SnnLayer l;
      l.weights = matrix_from_json<std::int8_t, int>(lj.at("weights"), "weights");
      l.threshold = lj.at("threshold").get<std::int32_t>();
      net.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    fail("parse_error", "snn: ", e.what());
  }
  net.zero_membranes();
  validate(net);
  return net;
}

}  // namespace radsnn
