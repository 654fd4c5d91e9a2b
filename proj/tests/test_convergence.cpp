// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#include "catch_amalgamated.hpp"

#include "icvec/convergence.hpp"
#include "icvec/experiments.hpp"

using namespace icvec;
using Catch::Approx;

namespace {

TrainingSet training(int K, int N, int T, bool orthogonal, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.num_operators = K;
  cfg.lines_per_operator = N;
  cfg.training_length = T;
  auto rt = make_stream(seed, Stream::training);
  auto X = gen_training(cfg, rt);
  return orthogonal ? orthogonalize(X) : X;
}

MultiOperatorChannel channel(int K, int N, double alpha, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.num_operators = K;
  cfg.lines_per_operator = N;
  cfg.training_length = N + 1;
  cfg.alpha = alpha;
  auto rc = make_stream(seed, Stream::channel);
  return synth_channel(cfg, rc);
}

// Independent oracle: J = (D^H D)^-1 D^H F from the dense factors.
CMat oracle_J(const JacobiSplit& s) {
  const CMat& D = *s.D;
  return (D.adjoint() * D).ldlt().solve(D.adjoint() * *s.F);
}

}  // namespace

TEST_CASE("kronecker product", "[convergence]") {
  CMat A(2, 2), B(1, 2);
  A << 1.0, 2.0, 3.0, 4.0;
  B << 1.0, cd(0.0, 1.0);
  const CMat K = kron(A, B);
  REQUIRE(K.rows() == 2);
  REQUIRE(K.cols() == 4);
  CHECK(K(1, 2) == cd(4.0, 0.0));
  CHECK(K(0, 1) == cd(0.0, 1.0));
}

TEST_CASE("estimation split", "[convergence]") {
  SECTION("orthogonal training gives a zero iteration matrix") {
    const auto s = build_split_estimation(training(2, 3, 12, true, 1));
    CHECK(s.core.cwiseAbs().maxCoeff() < 1e-13);
    CHECK(spectral_radius(s) < 1e-13);
  }
  SECTION("a single operator has nothing to iterate") {
    const auto s = build_split_estimation(training(1, 3, 8, false, 2));
    CHECK(s.core.isZero(0.0));
    CHECK(spectral_radius(s) == 0.0);
  }
  SECTION("random training contracts") {
    const auto s = build_split_estimation(training(2, 4, 32, false, 3));
    CHECK(spectral_radius(s) < 1.0);
    CHECK(spectral_radius(s) > 0.0);
  }
  SECTION("dense factors agree with the structured form") {
    const auto X = training(2, 2, 6, false, 4);
    const CMat Y = CMat::Random(4, 6);
    const auto s = build_split_estimation(X, &Y);
    REQUIRE(s.D.has_value());
    CHECK((oracle_J(s) - s.dense_J()).norm() < 1e-10 * (1.0 + s.dense_J().norm()));
    const CMat& D = *s.D;
    const CVec c = (D.adjoint() * D).ldlt().solve(D.adjoint() * *s.b);
    CHECK((c - s.offset).norm() < 1e-10 * c.norm());
    // Operator form equals the dense matrix.
    const CVec v = CVec::Random(s.unknowns());
    CHECK((s.apply(v) - s.dense_J() * v).norm() < 1e-12 * v.norm());
    CHECK((explicit_jacobi_step(s, v) - s.step(v)).norm() < 1e-10 * v.norm());
  }
  SECTION("dense iteration matrix has a size cap") {
    const auto s = build_split_estimation(training(3, 10, 40, false, 5), nullptr, false);
    CHECK(s.unknowns() == 900);
    CHECK_THROWS_AS(s.dense_J(500), ConfigError);
    CHECK_THROWS_AS(explicit_jacobi_step(s, CVec::Zero(900)), ConfigError);
  }
}

TEST_CASE("detection split", "[convergence]") {
  SECTION("no coupling, no cross blocks") {
    const auto s = build_split_detection(channel(2, 4, 0.0, 6));
    CHECK(s.core.isZero(1e-15));
    CHECK(spectral_radius(s) < 1e-15);
  }
  SECTION("moderate coupling contracts on every draw") {
    for (std::uint64_t seed = 0; seed < 100; ++seed)
      REQUIRE(spectral_radius(build_split_detection(channel(2, 10, 0.5, 1000 + seed))) < 1.0);
  }
  SECTION("median radius grows with weak coupling") {
    double prev = 0.0;
    for (double a : {0.02, 0.05, 0.1, 0.2}) {
      std::vector<double> r;
      for (std::uint64_t seed = 0; seed < 40; ++seed)
        r.push_back(spectral_radius(build_split_detection(channel(2, 6, a, 2000 + seed))));
      const double m = median(r);
      CHECK(m > prev);
      prev = m;
    }
  }
  SECTION("dense factors agree with the structured form") {
    const auto H = channel(3, 2, 0.6, 7);
    const CVec y = CVec::Random(6);
    const auto s = build_split_detection(H, &y);
    CHECK((oracle_J(s) - s.core).norm() < 1e-10 * (1.0 + s.core.norm()));
    const CVec v = CVec::Random(6);
    CHECK((explicit_jacobi_step(s, v) - s.step(v)).norm() < 1e-10 * v.norm());
  }
}

TEST_CASE("spectral radius", "[convergence]") {
  CHECK(spectral_radius_dense(CMat::Zero(3, 3)) == 0.0);
  CMat d = CMat::Zero(2, 2);
  d(0, 0) = 0.3;
  d(1, 1) = -0.9;
  CHECK(spectral_radius_dense(d) == Approx(0.9));

  auto rng = make_stream(8, Stream::aux);
  for (int n : {3, 8, 20}) {
    const CMat J = complex_normal_matrix(rng, n, n, 1.0 / n);
    const auto ev = J.eigenvalues();
    const double oracle = ev.cwiseAbs().maxCoeff();
    CHECK(spectral_radius_operator([&J](const CVec& v) { return CVec(J * v); }, n, 1e-12) ==
          Approx(oracle).epsilon(1e-6));
  }
  // Operator form on the Kronecker-structured estimation split.
  const auto s = build_split_estimation(training(2, 2, 8, false, 9), nullptr, false);
  CHECK(spectral_radius_operator(s, 1e-12) == Approx(spectral_radius(s)).epsilon(1e-6));
}

TEST_CASE("error envelope", "[convergence]") {
  SECTION("zero radius kills the error after one step") {
    const auto s = build_split_estimation(training(2, 2, 8, true, 10));
    const auto env = predicted_error_decay(s, 3);
    CHECK(env[0] == Approx(1.0));
    for (int n = 1; n <= 3; ++n) CHECK(env[n] < 1e-12);
  }
  SECTION("stronger coupling decays more slowly") {
    const auto weak = predicted_error_decay(build_split_detection(channel(2, 6, 0.1, 11)), 8);
    const auto strong = predicted_error_decay(build_split_detection(channel(2, 6, 0.6, 11)), 8);
    CHECK(weak[8] < strong[8]);
  }
  SECTION("measured estimation error stays below the envelope") {
    ScenarioConfig cfg;
    cfg.num_operators = 2;
    cfg.lines_per_operator = 3;
    cfg.training_length = 12;
    cfg.alpha = 0.8;
    auto rc = make_stream(12, Stream::channel);
    auto rn = make_stream(12, Stream::noise);
    const auto H = synth_channel(cfg, rc);
    for (bool orth : {true, false}) {
      const auto X = training(2, 3, 12, orth, 12);
      const CMat Y = H.full() * X.stacked() + complex_normal_matrix(rn, 6, 12, 0.01);
      const CMat mle = mle_centralized(Y, X).dense();
      const auto env = predicted_error_decay(build_split_estimation(X), 8);
      IcEstimationOptions opt;
      opt.rounds = 8;
      opt.schedule = EstimationSchedule::Jacobi;
      int n = 0;
      opt.observer = [&](int, std::span<const IcEstimationNode> nodes) {
        ++n;
        std::vector<ChannelEstimate> parts;
        for (const auto& node : nodes) parts.push_back(node.estimate());
        // Starting point is zero, so the initial error norm is ||mle||.
        CHECK((assemble(parts) - mle).norm() <= env[n] * mle.norm() * (1.0 + 1e-9) + 1e-12);
      };
      run_ic_estimation(Y, X, opt);
    }
  }
}

TEST_CASE("distributed iterations are the explicit recursion", "[convergence]") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    CHECK(estimation_equivalence(2, 3, 12, 0.7, 100 + seed, 8) < 1e-8);
    CHECK(estimation_equivalence(3, 2, 10, 0.7, 100 + seed, 8) < 1e-8);
    CHECK(detection_equivalence(2, 4, 0.4, 200 + seed, 8) < 1e-8);
    CHECK(detection_equivalence(3, 3, 0.4, 200 + seed, 8) < 1e-8);
  }
}
