// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "icvec/constellation.hpp"
#include "icvec/types.hpp"

namespace icvec {

/// Piecewise-linear coupling profile: (frequency in MHz, alpha in dB) knots.
/// Outside the knot range the end values are held.
class AlphaProfile {
 public:
  AlphaProfile() = default;
  explicit AlphaProfile(std::vector<std::pair<double, double>> knots_mhz_db) : knots_(std::move(knots_mhz_db)) {
    if (knots_.empty()) throw ConfigError("alpha profile needs at least one knot");
    for (std::size_t i = 1; i < knots_.size(); ++i)
      if (!(knots_[i].first > knots_[i - 1].first))
        throw ConfigError("alpha profile frequencies must be strictly increasing");
  }

  double alpha_db(double f_mhz) const { return interpolate(knots_, f_mhz); }
  double alpha(double f_mhz) const { return amp_from_db20(alpha_db(f_mhz)); }
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }
  bool empty() const { return knots_.empty(); }

  static double interpolate(const std::vector<std::pair<double, double>>& k, double x) {
    if (k.empty()) throw ConfigError("empty profile");
    if (x <= k.front().first) return k.front().second;
    if (x >= k.back().first) return k.back().second;
    auto hi = std::upper_bound(k.begin(), k.end(), x, [](double v, const auto& p) { return v < p.first; });
    auto lo = hi - 1;
    const double t = (x - lo->first) / (hi->first - lo->first);
    return lo->second + t * (hi->second - lo->second);
  }

 private:
  std::vector<std::pair<double, double>> knots_;
};

struct ScenarioConfig {
  int num_operators = 2;        // K
  int lines_per_operator = 10;  // N
  int training_length = 128;    // T
  std::variant<double, AlphaProfile> alpha = 0.5;  // linear amplitude, or per-tone profile
  double noise_power = 0.1;     // sigma^2, linear
  Modulation constellation = Modulation::QPSK;
  int max_iterations = 10;
  std::uint64_t seed = 1;

  int K() const { return num_operators; }
  int N() const { return lines_per_operator; }
  int KN() const { return num_operators * lines_per_operator; }

  /// Scalar coupling. Profiles must be resolved per tone first.
  double alpha_value() const {
    if (auto* a = std::get_if<double>(&alpha)) return *a;
    throw ConfigError("scenario carries an alpha profile; resolve it at a tone first");
  }

  ScenarioConfig at_tone(double f_mhz) const {
    ScenarioConfig c = *this;
    if (auto* p = std::get_if<AlphaProfile>(&alpha)) c.alpha = p->alpha(f_mhz);
    return c;
  }

  void validate() const {
    if (num_operators < 1) throw ConfigError("num_operators must be >= 1");
    if (lines_per_operator < 1) throw ConfigError("lines_per_operator must be >= 1");
    if (training_length <= lines_per_operator) throw ConfigError("training_length must exceed lines_per_operator");
    if (auto* a = std::get_if<double>(&alpha); a && !(*a >= 0.0)) throw ConfigError("alpha must be >= 0");
    if (!(noise_power > 0.0)) throw ConfigError("noise_power must be > 0");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  }
};

}  // namespace icvec
