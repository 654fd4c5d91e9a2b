// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "icvec/channel.hpp"
#include "icvec/channel_estimate.hpp"
#include "icvec/types.hpp"

namespace icvec {

/// dB value reported for an exactly zero error.
inline constexpr double kDbFloor = -200.0;
/// SNR_D reported for an exactly zero decision error.
inline constexpr double kSnrCapDb = 80.0;

inline double db_or_floor(double linear) { return linear > 0.0 ? std::max(kDbFloor, db10(linear)) : kDbFloor; }

enum class MseNormalization {
  Ensemble,     // E||H_ii||^2 = N(1 + (N-1) alpha^2), E||H_ij||^2 = N^2 alpha^2
  Realization,  // ||H_ii||^2, ||H_ij||^2 of the drawn channel
};

/// Squared-error and reference-power sums, kept separate so that averages
/// over blocks and trials are ratios of sums.
struct MseAccumulator {
  double self_err = 0.0, self_ref = 0.0;
  double alien_err = 0.0, alien_ref = 0.0;

  MseAccumulator& operator+=(const MseAccumulator& o) {
    self_err += o.self_err;
    self_ref += o.self_ref;
    alien_err += o.alien_err;
    alien_ref += o.alien_ref;
    return *this;
  }
  double self_linear() const { return ratio(self_err, self_ref); }
  double alien_linear() const { return ratio(alien_err, alien_ref); }
  double self_db() const { return to_db(self_err, self_ref); }
  double alien_db() const { return to_db(alien_err, alien_ref); }

 private:
  static double ratio(double e, double r) {
    if (r == 0.0 && e == 0.0) return std::nan("");
    if (r == 0.0) throw NumericalError("normalized MSE: zero-power denominator");
    return e / r;
  }
  static double to_db(double e, double r) {
    const double v = ratio(e, r);
    return std::isnan(v) ? v : db_or_floor(v);
  }
};

/// Normalized MSE over the blocks held by `est`, self and alien separately.
/// The alien entries are NaN when no alien block is held (e.g. K = 1) or
/// every held alien block has zero reference power (alpha = 0).
inline MseAccumulator normalized_mse(const ChannelEstimate& est, const MultiOperatorChannel& truth, double alpha,
                                     MseNormalization mode = MseNormalization::Ensemble) {
  require_dims(est.K() == truth.K() && est.N() == truth.N(), "normalized_mse: dimension mismatch");
  const int K = truth.K(), N = truth.N();
  const double e_self = N * (1.0 + (N - 1) * alpha * alpha);
  const double e_alien = double(N) * N * alpha * alpha;
  MseAccumulator acc;
  for (int from = 0; from < K; ++from)
    for (int to = 0; to < K; ++to) {
      if (!est.holds(from, to)) continue;
      const auto tb = truth.block(from, to);
      const double err = (est.block(from, to) - tb).squaredNorm();
      const double ref = mode == MseNormalization::Ensemble ? (from == to ? e_self : e_alien) : tb.squaredNorm();
      if (ref == 0.0) {
        if (from != to) continue;
        throw NumericalError("normalized MSE: zero-power denominator");
      }
      (from == to ? acc.self_err : acc.alien_err) += err;
      (from == to ? acc.self_ref : acc.alien_ref) += ref;
    }
  return acc;
}

/// Mean |u - x|^2 over all entries.
inline double decision_noise_power(const CMat& soft, const CMat& truth) {
  require_dims(soft.rows() == truth.rows() && soft.cols() == truth.cols(), "decision noise: shape mismatch");
  return (soft - truth).squaredNorm() / double(truth.size());
}

/// SNR at the decision variable, 10 log10(E|x|^2 / E|u - x|^2), capped.
inline double snr_decision(const CMat& soft, const CMat& truth) {
  const double err = decision_noise_power(soft, truth);
  const double sig = truth.squaredNorm() / double(truth.size());
  if (err == 0.0) return kSnrCapDb;
  return std::min(kSnrCapDb, db10(sig / err));
}

/// Fraction of symbols whose hard decision differs from the truth.
inline double symbol_error_rate(const CMat& decided, const CMat& truth, double tol = 1e-9) {
  require_dims(decided.rows() == truth.rows() && decided.cols() == truth.cols(), "SER: shape mismatch");
  if (truth.size() == 0) return 0.0;
  long bad = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) bad += std::abs(decided(i) - truth(i)) > tol;
  return double(bad) / double(truth.size());
}

/// Gap-formula loading parameters. The default gap is 6 dB margin plus
/// 9.8 dB uncoded gap minus 5 dB coding gain.
struct GapModel {
  double gamma_db = 6.0 + 9.8 - 5.0;
  int max_bits = 12;
  double framing_overhead = 0.12;
  double tone_spacing_hz = 4312.5;
  bool integer_bits = false;

  void validate() const {
    if (max_bits < 0) throw ConfigError("gap model: max_bits must be >= 0");
    if (!(framing_overhead >= 0.0 && framing_overhead < 1.0)) throw ConfigError("gap model: overhead must be in [0,1)");
    if (!(tone_spacing_hz > 0.0)) throw ConfigError("gap model: tone spacing must be > 0");
  }
};

inline double bit_loading(double snr_db, const GapModel& g = {}) {
  if (std::isnan(snr_db)) throw ConfigError("bit loading: SNR is NaN");
  const double b = std::log2(1.0 + std::pow(10.0, (snr_db - g.gamma_db) / 10.0));
  const double capped = std::clamp(b, 0.0, double(g.max_bits));
  return g.integer_bits ? std::floor(capped) : capped;
}

/// (1 - overhead) * symbol_rate * sum of bits, in Mbit/s.
inline double throughput_mbps(std::span<const double> per_tone_bits, const GapModel& g, double symbol_rate_hz) {
  double sum = 0.0;
  for (double b : per_tone_bits) sum += b;
  return (1.0 - g.framing_overhead) * symbol_rate_hz * sum / 1e6;
}

/// Received-signal and noise PSDs (dBm/Hz) to the linear noise power seen
/// against a unit-power direct path.
inline double sigma2_from_psd(double signal_dbm_hz = -76.0, double noise_dbm_hz = -140.0) {
  return undb10(noise_dbm_hz - signal_dbm_hz);
}

}  // namespace icvec
