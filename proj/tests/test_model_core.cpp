// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#include "catch_amalgamated.hpp"

#include "icvec/channel.hpp"
#include "icvec/config.hpp"
#include "icvec/constellation.hpp"
#include "icvec/rng.hpp"
#include "icvec/signal.hpp"

using namespace icvec;
using Catch::Approx;

namespace {

ScenarioConfig cfg_of(int K, int N, double alpha) {
  ScenarioConfig c;
  c.num_operators = K;
  c.lines_per_operator = N;
  c.training_length = N + 1;
  c.alpha = alpha;
  return c;
}

}  // namespace

TEST_CASE("direct paths have unit modulus", "[model-core]") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto rng = make_stream(seed, Stream::channel);
    const auto H = synth_channel(cfg_of(3, 4, 0.7), rng);
    for (int p = 0; p < 12; ++p) CHECK(std::abs(H.full()(p, p)) == Approx(1.0).margin(1e-15));
  }
}

TEST_CASE("zero coupling gives a diagonal channel", "[model-core]") {
  auto rng = make_stream(3, Stream::channel);
  const auto H = synth_channel(cfg_of(2, 5, 0.0), rng);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 10; ++c)
      if (r != c) REQUIRE(H.full()(r, c) == cd(0.0, 0.0));
}

TEST_CASE("off-diagonal entries have variance alpha^2", "[model-core]") {
  auto rng = make_stream(11, Stream::channel);
  const auto H = synth_channel(cfg_of(1, 1000, 0.5), rng);
  const CMat& F = H.full();
  double sum = 0.0;
  long n = 0;
  for (int c = 0; c < 1000; ++c)
    for (int r = 0; r < 1000; ++r)
      if (r != c) {
        sum += std::norm(F(r, c));
        ++n;
      }
  CHECK(sum / n == Approx(0.25).epsilon(0.01));
}

TEST_CASE("block accessors follow the from/to convention", "[model-core]") {
  auto rng = make_stream(5, Stream::channel);
  const auto H = synth_channel(cfg_of(3, 2, 0.4), rng);
  // block(from, to) couples operator `from`'s transmitters into `to`'s receivers.
  CHECK(H.block(0, 2).isApprox(H.full().block(4, 0, 2, 2)));
  CHECK(H.column_group(1).isApprox(H.full().middleCols(2, 2)));
  CHECK(H.row_group(2).isApprox(H.full().middleRows(4, 2)));
  std::vector<CMat> cols, rows;
  for (int k = 0; k < 3; ++k) {
    cols.emplace_back(H.column_group(k));
    rows.emplace_back(H.row_group(k));
  }
  CHECK(MultiOperatorChannel::from_column_groups(3, 2, cols).full() == H.full());
  CHECK(MultiOperatorChannel::from_row_groups(3, 2, rows).full() == H.full());
}

TEST_CASE("transmit of zero symbols without noise is zero", "[model-core]") {
  auto rc = make_stream(1, Stream::channel);
  auto rn = make_stream(1, Stream::noise);
  const auto cfg = cfg_of(2, 3, 0.5);
  const auto H = synth_channel(cfg, rc);
  SymbolFrame s{2, 3, CMat::Zero(6, 4)};
  CHECK(transmit(H, s, 0.0, rn).y.isZero(0.0));
}

TEST_CASE("identity channel passes symbols through", "[model-core]") {
  MultiOperatorChannel H(2, 2, CMat::Identity(4, 4));
  auto rs = make_stream(2, Stream::symbols);
  auto rn = make_stream(2, Stream::noise);
  const auto x = draw_symbols(cfg_of(2, 2, 0.0), 3, rs);
  CHECK(transmit(H, x, 0.0, rn).y == x.x);
}

TEST_CASE("transmit matches a direct multiply-plus-noise oracle", "[model-core]") {
  const auto cfg = cfg_of(2, 2, 0.6);
  auto rc = make_stream(42, Stream::channel);
  auto rs = make_stream(42, Stream::symbols);
  auto rn = make_stream(42, Stream::noise);
  const auto H = synth_channel(cfg, rc);
  const auto x = draw_symbols(cfg, 5, rs);
  const auto y = transmit(H, x, 0.1, rn);

  auto rn2 = make_stream(42, Stream::noise);
  // Noise is drawn column by column in the documented order.
  CMat w(4, 5);
  for (int l = 0; l < 5; ++l)
    for (int r = 0; r < 4; ++r) w(r, l) = complex_normal(rn2, 0.1);
  REQUIRE(y.noise == w);
  for (int l = 0; l < 5; ++l)
    for (int r = 0; r < 4; ++r) {
      cd acc = 0.0;
      for (int c = 0; c < 4; ++c) acc += H.full()(r, c) * x.x(c, l);
      CHECK(std::abs(y.y(r, l) - (acc + w(r, l))) <= 1e-15 * (1.0 + std::abs(acc)));
    }
}

TEST_CASE("constellation draws", "[model-core]") {
  SECTION("BPSK is +-1") {
    auto rs = make_stream(1, Stream::symbols);
    auto cfg = cfg_of(2, 3, 0.1);
    cfg.constellation = Modulation::BPSK;
    const auto x = draw_symbols(cfg, 4, rs);
    for (Eigen::Index i = 0; i < x.x.size(); ++i) {
      const cd v = x.x(i);
      CHECK(v.imag() == 0.0);
      CHECK((v.real() == 1.0 || v.real() == -1.0));
    }
  }
  SECTION("QPSK has unit modulus") {
    auto rs = make_stream(2, Stream::symbols);
    const auto x = draw_symbols(cfg_of(2, 3, 0.1), 20, rs);
    for (Eigen::Index i = 0; i < x.x.size(); ++i) CHECK(std::abs(x.x(i)) == Approx(1.0).margin(1e-15));
  }
  SECTION("QAM16 has unit mean power") {
    auto rs = make_stream(3, Stream::symbols);
    const Constellation c(Modulation::QAM16);
    double p = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) p += std::norm(c.draw(rs));
    CHECK(p / n == Approx(1.0).epsilon(0.01));
  }
  SECTION("alphabets are unit power") {
    for (auto m : {Modulation::BPSK, Modulation::QPSK, Modulation::QAM16, Modulation::QAM64, Modulation::QAM256,
                   Modulation::QAM4096}) {
      const Constellation c(m);
      double p = 0.0;
      for (cd s : c.points()) p += std::norm(s);
      CHECK(p / c.size() == Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("slicer picks the nearest point", "[model-core]") {
  const Constellation c(Modulation::QAM16);
  for (cd s : c.points()) {
    CHECK(c.slice(s + cd(0.05, -0.05)) == s);
    CHECK(c.contains(s));
  }
  const double top = c.max_component();
  CHECK(c.slice(cd(100.0, -100.0)) == cd(top, -top));
  CHECK(c.bits_per_symbol() == 4);
}

TEST_CASE("modulation names parse case-insensitively", "[model-core]") {
  CHECK(parse_modulation("qpsk") == Modulation::QPSK);
  CHECK(parse_modulation("QAM64") == Modulation::QAM64);
  CHECK_THROWS_AS(parse_modulation("8psk"), ConfigError);
}

TEST_CASE("streams are reproducible and independent", "[model-core]") {
  auto a = make_stream(9, Stream::noise, 3), b = make_stream(9, Stream::noise, 3);
  auto c = make_stream(9, Stream::channel, 3), d = make_stream(9, Stream::noise, 4);
  const auto va = a(), vb = b(), vc = c(), vd = d();
  CHECK(va == vb);
  CHECK(va != vc);
  CHECK(va != vd);
}

TEST_CASE("scenario config validation", "[model-core]") {
  auto c = cfg_of(2, 4, 0.5);
  CHECK_NOTHROW(c.validate());
  c.training_length = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = cfg_of(2, 4, -0.1);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = cfg_of(0, 4, 0.1);
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("alpha profile interpolates in dB and clamps outside its knots", "[model-core]") {
  const AlphaProfile p({{1.0, -30.0}, {3.0, -10.0}});
  CHECK(p.alpha_db(0.5) == -30.0);
  CHECK(p.alpha_db(2.0) == Approx(-20.0));
  CHECK(p.alpha_db(9.0) == -10.0);
  CHECK(p.alpha(2.0) == Approx(0.1));
  CHECK_THROWS_AS(AlphaProfile({{2.0, 0.0}, {1.0, 0.0}}), ConfigError);

  ScenarioConfig c = cfg_of(2, 2, 0.0);
  c.alpha = p;
  CHECK_THROWS_AS(c.alpha_value(), ConfigError);
  CHECK(c.at_tone(2.0).alpha_value() == Approx(0.1));
}
