// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "icvec/constellation.hpp"
#include "icvec/types.hpp"

namespace icvec {

struct SoftMoments {
  double mean = 0.0;
  double variance = 0.0;  // posterior E[(a - mean)^2 | y]
};

/// Posterior moments of an equiprobable real alphabet observed in real
/// Gaussian noise of variance `noise_var`.
///
/// The mean is the conditional-mean estimator phi[y] = y + s^2 d/dy log p(y),
/// evaluated in its closed form sum_k a_k p(a_k | y). Weights are computed in
/// the log domain so saturation at large |y| / s^2 stays exact.
inline SoftMoments soft_moments(double y, double noise_var, std::span<const double> alphabet) {
  if (alphabet.empty()) throw ConfigError("soft estimator: empty alphabet");
  if (!(noise_var > 0.0)) throw ConfigError("soft estimator: noise variance must be > 0");
  double max_log = -INFINITY;
  for (double a : alphabet) max_log = std::max(max_log, -(y - a) * (y - a) / (2.0 * noise_var));
  double wsum = 0.0, m1 = 0.0, m2 = 0.0;
  for (double a : alphabet) {
    const double w = std::exp(-(y - a) * (y - a) / (2.0 * noise_var) - max_log);
    wsum += w;
    m1 += w * a;
    m2 += w * a * a;
  }
  const double mean = m1 / wsum;
  return {mean, std::max(0.0, m2 / wsum - mean * mean)};
}

inline double soft_estimate(double y, double noise_var, std::span<const double> alphabet) {
  return soft_moments(y, noise_var, alphabet).mean;
}

/// g_Lambda for a separable constellation: complex noise of total variance
/// `noise_var` splits evenly over the real and imaginary components.
class SoftDetector {
 public:
  explicit SoftDetector(const Constellation& c) : c_(&c) {}

  cd estimate(cd y, double noise_var) const {
    const double v = noise_var / 2.0;
    return {soft_estimate(y.real(), v, c_->real_levels()), soft_estimate(y.imag(), v, c_->imag_levels())};
  }

  /// Posterior mean together with the residual symbol variance E|x - mean|^2.
  std::pair<cd, double> estimate_with_variance(cd y, double noise_var) const {
    const double v = noise_var / 2.0;
    const auto re = soft_moments(y.real(), v, c_->real_levels());
    const auto im = soft_moments(y.imag(), v, c_->imag_levels());
    return {cd(re.mean, im.mean), re.variance + im.variance};
  }

  cd hard(cd y) const { return c_->slice(y); }

  const Constellation& constellation() const { return *c_; }

 private:
  const Constellation* c_;
};

}  // namespace icvec
