// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#include <cmath>
#include <vector>

#include "catch_amalgamated.hpp"

#include "icvec/estimation.hpp"
#include "icvec/metrics.hpp"

using namespace icvec;
using Catch::Approx;

namespace {

MultiOperatorChannel channel(int K, int N, double alpha, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.num_operators = K;
  cfg.lines_per_operator = N;
  cfg.training_length = N + 1;
  cfg.alpha = alpha;
  auto rc = make_stream(seed, Stream::channel);
  return synth_channel(cfg, rc);
}

}  // namespace

TEST_CASE("normalized MSE endpoints", "[metrics]") {
  const auto H = channel(2, 4, 0.5, 1);
  const auto exact = normalized_mse(ChannelEstimate::from_full(2, 4, H.full()), H, 0.5);
  CHECK(exact.self_db() == kDbFloor);
  CHECK(exact.alien_db() == kDbFloor);

  const auto zero = ChannelEstimate::from_full(2, 4, CMat::Zero(8, 8));
  const auto z = normalized_mse(zero, H, 0.5, MseNormalization::Realization);
  CHECK(z.self_db() == Approx(0.0).margin(1e-12));
  CHECK(z.alien_db() == Approx(0.0).margin(1e-12));

  // Ensemble normalization of a zero estimate averages to 0 dB.
  MseAccumulator acc;
  for (std::uint64_t s = 0; s < 400; ++s) acc += normalized_mse(zero, channel(2, 4, 0.5, 100 + s), 0.5);
  CHECK(acc.self_db() == Approx(0.0).margin(0.1));
  CHECK(acc.alien_db() == Approx(0.0).margin(0.1));
}

TEST_CASE("normalized MSE without alien power", "[metrics]") {
  const auto H = channel(2, 3, 0.0, 2);
  const auto m = normalized_mse(ChannelEstimate::from_full(2, 3, CMat::Zero(6, 6)), H, 0.0);
  CHECK(std::isnan(m.alien_db()));
  CHECK(m.self_db() == Approx(0.0).margin(1.0));
  CHECK_THROWS_AS(normalized_mse(ChannelEstimate::from_full(2, 3, CMat::Zero(6, 6)),
                                 MultiOperatorChannel(2, 3, CMat::Zero(6, 6)), 0.0, MseNormalization::Realization),
                  NumericalError);
}

TEST_CASE("MLE error matches the normalized bound", "[metrics]") {
  ScenarioConfig cfg;
  cfg.num_operators = 2;
  cfg.lines_per_operator = 4;
  cfg.training_length = 64;
  cfg.alpha = 0.5;
  const double sigma2 = undb10(-15.0);
  auto rt = make_stream(3, Stream::training);
  const auto X = orthogonalize(gen_training(cfg, rt));
  MseAccumulator acc;
  for (std::uint64_t t = 0; t < 2000; ++t) {
    auto rc = make_stream(3, Stream::channel, t);
    auto rn = make_stream(3, Stream::noise, t);
    const auto H = synth_channel(cfg, rc);
    const CMat Y = H.full() * X.stacked() + complex_normal_matrix(rn, 8, 64, sigma2);
    acc += normalized_mse(mle_centralized(Y, X), H, 0.5);
  }
  const auto bound = normalized_crb(sigma2, X, 0.5);
  CHECK(std::abs(acc.self_db() - bound.self_db()) < 0.3);
  CHECK(std::abs(acc.alien_db() - bound.alien_db()) < 0.3);
}

TEST_CASE("decision SNR", "[metrics]") {
  auto rng = make_stream(4, Stream::aux);
  const CMat x = complex_normal_matrix(rng, 100, 1000, 1.0);
  CHECK(snr_decision(x, x) == kSnrCapDb);
  CHECK(snr_decision(CMat::Zero(100, 1000), x) == Approx(0.0).margin(1e-12));
  const CMat u = x + complex_normal_matrix(rng, 100, 1000, 0.1);
  CHECK(snr_decision(u, x) == Approx(10.0).margin(0.2));
  CHECK(decision_noise_power(u, x) == Approx(0.1).epsilon(0.02));
  CHECK(snr_decision(x + 1e-6 * x, x) == Approx(kSnrCapDb));
  CHECK_THROWS(snr_decision(x.leftCols(3), x));
}

TEST_CASE("symbol error rate", "[metrics]") {
  CMat t = CMat::Ones(2, 5), d = t;
  CHECK(symbol_error_rate(d, t) == 0.0);
  d(0, 0) = -1.0;
  d(1, 4) = cd(1.0, 1.0);
  CHECK(symbol_error_rate(d, t) == Approx(0.2));
  CHECK(symbol_error_rate(CMat(0, 0), CMat(0, 0)) == 0.0);
}

TEST_CASE("gap-formula bit loading", "[metrics]") {
  const GapModel g;
  CHECK(g.gamma_db == Approx(10.8));
  CHECK(bit_loading(10.8) == Approx(1.0));
  CHECK(bit_loading(80.0) == 12.0);
  CHECK(bit_loading(-HUGE_VAL) == 0.0);
  CHECK(bit_loading(-30.0) == Approx(0.0).margin(1e-3));
  CHECK_THROWS_AS(bit_loading(std::nan("")), ConfigError);
  // log2(1 + 10^(x/10)) oracle.
  for (double s : {0.0, 15.0, 33.3, 40.0})
    CHECK(bit_loading(s) == Approx(std::log2(1.0 + std::pow(10.0, (s - 10.8) / 10.0))));
  GapModel integer = g;
  integer.integer_bits = true;
  CHECK(bit_loading(30.0, integer) == std::floor(bit_loading(30.0)));
  GapModel capped = g;
  capped.max_bits = 8;
  CHECK(bit_loading(60.0, capped) == 8.0);
}

TEST_CASE("aggregate throughput", "[metrics]") {
  const GapModel g;
  const std::vector<double> full(1000, 12.0);
  CHECK(throughput_mbps(full, g, 48000.0) == Approx(506.88));
  std::vector<double> a(50, 3.0), b(50, 5.0), ab(50, 8.0);
  CHECK(throughput_mbps(ab, g, 4000.0) == Approx(throughput_mbps(a, g, 4000.0) + throughput_mbps(b, g, 4000.0)));
  CHECK(throughput_mbps(std::vector<double>(200, 0.0), g, 4000.0) == 0.0);
  CHECK(throughput_mbps(std::vector<double>{}, g, 4000.0) == 0.0);
}

TEST_CASE("noise power from PSDs and model validation", "[metrics]") {
  CHECK(sigma2_from_psd() == Approx(std::pow(10.0, -6.4)));
  CHECK(sigma2_from_psd(-60.0, -140.0) == Approx(1e-8));
  GapModel g;
  CHECK_NOTHROW(g.validate());
  g.framing_overhead = 1.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = {};
  g.max_bits = -1;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = {};
  g.tone_spacing_hz = 0.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  CHECK(db_or_floor(0.0) == kDbFloor);
  CHECK(db_or_floor(1e-30) == kDbFloor);
  CHECK(db_or_floor(100.0) == Approx(20.0));
}
