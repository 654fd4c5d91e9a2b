// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include "icvec/channel.hpp"
#include "icvec/config.hpp"
#include "icvec/constellation.hpp"
#include "icvec/rng.hpp"
#include "icvec/types.hpp"

namespace icvec {

/// K operators x N lines of symbols over L symbol times, stacked KN x L.
struct SymbolFrame {
  int K = 0;
  int N = 0;
  CMat x;

  Eigen::Index length() const { return x.cols(); }
  auto of(int k) const { return x.middleRows(k * N, N); }
};

/// y = H x + w over L symbol times. `noise` keeps the realized w.
struct ReceivedFrame {
  int K = 0;
  int N = 0;
  CMat y;
  CMat noise;

  auto of(int k) const { return y.middleRows(k * N, N); }
};

inline SymbolFrame draw_symbols(const ScenarioConfig& cfg, Eigen::Index length, Rng& rng) {
  if (length < 1) throw ConfigError("draw_symbols: length must be >= 1");
  const Constellation c(cfg.constellation);
  SymbolFrame f{cfg.K(), cfg.N(), CMat(cfg.KN(), length)};
  for (Eigen::Index t = 0; t < length; ++t)
    for (int r = 0; r < cfg.KN(); ++r) f.x(r, t) = c.draw(rng);
  return f;
}

inline ReceivedFrame transmit(const MultiOperatorChannel& H, const SymbolFrame& s, double sigma2, Rng& rng) {
  require_dims(H.K() == s.K && H.N() == s.N && s.x.rows() == H.full().cols(),
               "transmit: symbol frame does not match channel");
  if (sigma2 < 0.0) throw ConfigError("transmit: noise power must be >= 0");
  ReceivedFrame r{s.K, s.N, CMat(), complex_normal_matrix(rng, s.x.rows(), s.x.cols(), sigma2)};
  r.y = H.full() * s.x + r.noise;
  return r;
}

}  // namespace icvec
