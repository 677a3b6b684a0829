// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Synthetic gamma spectra and Poisson detection-event streams.
//
// An isotope is described by a handful of Gaussian photopeaks over the
// detector's energy channels. A frame is one integration window of per-channel
// Poisson counts; an event stream is the same information delivered as
// time-ordered (timestamp, channel) detections on a 1 us grid.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "radsnn/error.hpp"
#include "radsnn/rng.hpp"

namespace radsnn {

inline constexpr std::size_t kDefaultChannels = 1024;
inline constexpr double kMaxEventRateHz = 1000.0;
inline constexpr std::array<double, 5> kDistancesCm{10, 25, 50, 100, 150};

inline bool is_supported_distance(double d) {
  return std::find(kDistancesCm.begin(), kDistancesCm.end(), d) !=
         kDistancesCm.end();
}

struct Peak {
  double center = 0;     // channel
  double width = 1;      // Gaussian sigma in channels
  double intensity = 1;  // relative
};

struct IsotopeTemplate {
  std::string name;
  std::vector<Peak> peaks;
  double base_rate_hz = 0;  // at reference_distance_cm
  double reference_distance_cm = 10;
};

struct SourceScenario {
  IsotopeTemplate isotope;
  double distance_cm = 10;
  double background_rate_hz = 0;
  double duration_s = 1;
  std::uint64_t seed = 0;
};

struct EnergyHistogram {
  std::vector<std::uint64_t> counts;
  double integration_time_s = 1;

  std::size_t size() const { return counts.size(); }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
  bool operator==(const EnergyHistogram&) const = default;
};

struct DetectionEvent {
  std::uint64_t t_us = 0;
  std::uint32_t channel = 0;
  bool operator==(const DetectionEvent&) const = default;
};

struct EventStream {
  std::vector<DetectionEvent> events;
  std::uint64_t duration_us = 0;
  std::uint32_t n_channels = 0;

  bool operator==(const EventStream&) const = default;
};

inline void validate(const IsotopeTemplate& t, std::size_t n_channels) {
  auto bad = [&](auto&&... why) {
    fail("invalid_template", "template '", t.name, "': ", why...);
  };
  if (t.name.empty()) fail("invalid_template", "template with empty name");
  if (t.peaks.empty()) bad("no peaks");
  double intensity_sum = 0;
  for (const auto& p : t.peaks) {
    if (!(p.center >= 0 && p.center < static_cast<double>(n_channels)))
      bad("peak center ", p.center, " outside [0, ", n_channels, ")");
    if (!(p.width > 0)) bad("peak width must be positive");
    if (!(p.intensity > 0)) bad("peak intensity must be positive");
    intensity_sum += p.intensity;
  }
  if (!(intensity_sum > 0)) bad("intensities must sum to a positive value");
  if (!(t.base_rate_hz >= 0 && t.base_rate_hz <= kMaxEventRateHz))
    bad("base_rate_hz ", t.base_rate_hz, " outside [0, ", kMaxEventRateHz, "]");
  if (!(t.reference_distance_cm > 0)) bad("reference_distance_cm must be positive");
}

inline void validate(const SourceScenario& s, std::size_t n_channels) {
  validate(s.isotope, n_channels);
  require(is_supported_distance(s.distance_cm), "invalid_scenario",
          "unsupported distance ", s.distance_cm, " cm");
  require(s.background_rate_hz >= 0, "invalid_scenario",
          "background rate must be nonnegative");
  require(s.duration_s > 0, "invalid_scenario", "duration must be positive");
}

inline void validate(const EventStream& s) {
  std::uint64_t prev = 0;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const auto& e = s.events[i];
    require(i == 0 || e.t_us > prev, "invalid_stream", "event ", i,
            ": timestamps must be strictly increasing");
    require(e.channel < s.n_channels, "invalid_stream", "event ", i,
            ": channel ", e.channel, " >= n_channels ", s.n_channels);
    require(e.t_us < s.duration_us, "invalid_stream", "event ", i,
            ": timestamp ", e.t_us, " beyond duration ", s.duration_us);
    prev = e.t_us;
  }
}

// ---------------------------------------------------------------------------
// Template file (JSON array)

inline std::vector<IsotopeTemplate> parse_templates(
    const std::string& text, std::size_t n_channels = kDefaultChannels,
    const std::string& origin = "<templates>") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1 + std::count(text.begin(),
                                      text.begin() + std::min(e.byte, text.size()), '\n');
    fail("parse_error", origin, ":", line, ": ", e.what());
  }
  require(doc.is_array(), "parse_error", origin, ": expected a JSON array");
  require(!doc.empty(), "no_templates", origin, ": no templates");
  std::vector<IsotopeTemplate> out;
  for (const auto& item : doc) {
    IsotopeTemplate t;
    try {
      t.name = item.at("name").get<std::string>();
      t.base_rate_hz = item.at("base_rate_hz").get<double>();
      t.reference_distance_cm = item.at("reference_distance_cm").get<double>();
      for (const auto& p : item.at("peaks")) {
        t.peaks.push_back({p.at("center").get<double>(), p.at("width").get<double>(),
                           p.at("intensity").get<double>()});
      }
    } catch (const nlohmann::json::exception& e) {
      fail("parse_error", origin, ": template #", out.size(), ": ", e.what());
    }
    validate(t, n_channels);
    out.push_back(std::move(t));
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "io_error", path, ": cannot open");
  std::ostringstream oss;
  oss << in.rdbuf();
  return oss.str();
}

inline std::vector<IsotopeTemplate> load_templates(
    const std::string& path, std::size_t n_channels = kDefaultChannels) {
  return parse_templates(read_file(path), n_channels, path);
}

// ---------------------------------------------------------------------------
// Frame synthesis

// Expected count rate (events/s) per channel: the template's peak mixture,
// scaled by the inverse square of distance, plus flat background.
inline std::vector<double> expected_channel_rates(const IsotopeTemplate& t,
                                                  double distance_cm,
                                                  double background_rate_hz,
                                                  std::size_t n_channels) {
  std::vector<double> shape(n_channels, 0.0);
  double intensity_sum = 0;
  for (const auto& p : t.peaks) intensity_sum += p.intensity;
  for (const auto& p : t.peaks) {
    const double w = p.intensity / intensity_sum;
    auto cdf = [&](double x) {
      return 0.5 * std::erfc(-(x - p.center) / (p.width * std::sqrt(2.0)));
    };
    // Channel c integrates the peak over [c, c + 1).
    double lo = cdf(0.0);
    for (std::size_t c = 0; c < n_channels; ++c) {
      const double hi = cdf(static_cast<double>(c + 1));
      shape[c] += w * (hi - lo);
      lo = hi;
    }
  }
  double mass = 0;
  for (double v : shape) mass += v;
  const double ratio = t.reference_distance_cm / distance_cm;
  const double source_rate = t.base_rate_hz * ratio * ratio;
  const double bg_per_channel = background_rate_hz / static_cast<double>(n_channels);
  std::vector<double> rates(n_channels);
  for (std::size_t c = 0; c < n_channels; ++c)
    rates[c] = (mass > 0 ? source_rate * shape[c] / mass : 0.0) + bg_per_channel;
  return rates;
}

inline EnergyHistogram sample_histogram(std::span<const double> rates_hz,
                                        double duration_s, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  EnergyHistogram h;
  h.integration_time_s = duration_s;
  h.counts.resize(rates_hz.size());
  for (std::size_t c = 0; c < rates_hz.size(); ++c) {
    const double mean = rates_hz[c] * duration_s;
    if (mean > 0) {
      std::poisson_distribution<std::uint64_t> pois(mean);
      h.counts[c] = pois(rng);
    }
  }
  return h;
}

inline EnergyHistogram synth_histogram(const SourceScenario& s,
                                       std::size_t n_channels = kDefaultChannels) {
  validate(s, n_channels);
  const auto rates = expected_channel_rates(s.isotope, s.distance_cm,
                                            s.background_rate_hz, n_channels);
  return sample_histogram(rates, s.duration_s, s.seed);
}

// ---------------------------------------------------------------------------
// Frame -> event stream

// Each channel becomes an independent Poisson source whose rate is its share
// of total_rate_hz. The superposition is drawn as a Poisson total with
// uniformly placed timestamps; a timestamp already taken is re-drawn until a
// free 1 us slot is found.
inline EventStream histogram_to_event_stream(const EnergyHistogram& hist,
                                             double total_rate_hz,
                                             double duration_s,
                                             std::uint64_t seed) {
  require(hist.total() > 0, "empty_spectrum", "empty spectrum");
  require(total_rate_hz > 0 && total_rate_hz <= kMaxEventRateHz, "invalid_argument",
          "total_rate_hz ", total_rate_hz, " outside (0, ", kMaxEventRateHz, "]");
  require(duration_s > 0, "invalid_argument", "duration must be positive");

  EventStream s;
  s.n_channels = static_cast<std::uint32_t>(hist.size());
  s.duration_us = static_cast<std::uint64_t>(std::llround(duration_s * 1e6));
  require(s.duration_us > 0, "invalid_argument", "duration shorter than 1 us");

  Rng rng = make_rng(seed);
  std::poisson_distribution<std::uint64_t> total(total_rate_hz * duration_s);
  const std::uint64_t n = total(rng);
  require(n <= s.duration_us, "invalid_argument", "more events than 1 us slots");

  std::vector<double> weights(hist.counts.begin(), hist.counts.end());
  std::discrete_distribution<std::uint32_t> channel(weights.begin(), weights.end());
  std::uniform_int_distribution<std::uint64_t> slot(0, s.duration_us - 1);

  std::unordered_set<std::uint64_t> taken;
  taken.reserve(n * 2);
  s.events.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t t = slot(rng);
    while (!taken.insert(t).second) t = slot(rng);
    s.events.push_back({t, channel(rng)});
  }
  std::sort(s.events.begin(), s.events.end(),
            [](const auto& a, const auto& b) { return a.t_us < b.t_us; });
  return s;
}

// Events with t_us < window_us; the stream's duration becomes the window.
inline EventStream truncate(const EventStream& s, std::uint64_t window_us) {
  EventStream out;
  out.n_channels = s.n_channels;
  out.duration_us = std::min(window_us, s.duration_us);
  for (const auto& e : s.events) {
    if (e.t_us >= out.duration_us) break;
    out.events.push_back(e);
  }
  return out;
}

inline EnergyHistogram histogram_of(const EventStream& s, double integration_time_s = 0) {
  EnergyHistogram h;
  h.counts.assign(s.n_channels, 0);
  h.integration_time_s =
      integration_time_s > 0 ? integration_time_s : static_cast<double>(s.duration_us) * 1e-6;
  for (const auto& e : s.events) ++h.counts.at(e.channel);
  return h;
}

// ---------------------------------------------------------------------------
// Stream file: JSON Lines, header {n_channels, duration_us[, manifest]} then
// one {t_us, channel} per line.

inline void write_stream(std::ostream& out, const EventStream& s,
                         const nlohmann::json& manifest = nullptr) {
  nlohmann::json header{{"n_channels", s.n_channels}, {"duration_us", s.duration_us}};
  if (!manifest.is_null()) header["manifest"] = manifest;
  out << header.dump() << '\n';
  for (const auto& e : s.events)
    out << "{\"channel\":" << e.channel << ",\"t_us\":" << e.t_us << "}\n";
}

inline EventStream read_stream(std::istream& in, const std::string& origin = "<stream>") {
  std::string line;
  std::size_t lineno = 0;
  EventStream s;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (!have_header) {
        s.n_channels = j.at("n_channels").get<std::uint32_t>();
        s.duration_us = j.at("duration_us").get<std::uint64_t>();
        have_header = true;
      } else {
        s.events.push_back({j.at("t_us").get<std::uint64_t>(),
                            j.at("channel").get<std::uint32_t>()});
      }
    } catch (const nlohmann::json::exception& e) {
      fail("parse_error", origin, ":", lineno, ": ", e.what());
    }
  }
  require(have_header, "parse_error", origin, ": missing header line");
  validate(s);
  return s;
}

inline std::string stream_to_string(const EventStream& s,
                                    const nlohmann::json& manifest = nullptr) {
  std::ostringstream oss;
  write_stream(oss, s, manifest);
  return oss.str();
}

inline EventStream stream_from_string(const std::string& text,
                                      const std::string& origin = "<stream>") {
  std::istringstream in(text);
  return read_stream(in, origin);
}

// Histogram file: CSV, one count per line.
inline std::string histogram_to_csv(const EnergyHistogram& h) {
  std::ostringstream oss;
  for (auto c : h.counts) oss << c << '\n';
  return oss.str();
}

inline EnergyHistogram histogram_from_csv(const std::string& text,
                                          double integration_time_s = 1.0,
                                          const std::string& origin = "<histogram>") {
  EnergyHistogram h;
  h.integration_time_s = integration_time_s;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::size_t used = 0;
    long long v = -1;
    try {
      v = std::stoll(line, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used > 0 && v >= 0, "parse_error", origin, ":", lineno,
            ": expected a nonnegative integer count");
    h.counts.push_back(static_cast<std::uint64_t>(v));
  }
  require(!h.counts.empty(), "parse_error", origin, ": empty histogram");
  return h;
}

}  // namespace radsnn
