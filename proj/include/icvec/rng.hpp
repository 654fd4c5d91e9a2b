// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "icvec/types.hpp"

namespace icvec {

/// Sub-stream identifiers. A (master seed, purpose, trial) triple always maps
/// to the same generator, so Monte-Carlo trials can run in any order.
enum class Stream : std::uint64_t {
  channel = 1,
  symbols = 2,
  noise = 3,
  training = 4,
  aux = 5,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t master_seed, Stream purpose, std::uint64_t trial = 0) {
  std::uint64_t s = splitmix64(master_seed);
  s = splitmix64(s ^ (static_cast<std::uint64_t>(purpose) * 0xd1b54a32d192ed03ULL));
  s = splitmix64(s ^ (trial + 0x632be59bd9b4e019ULL));
  return Rng(s);
}

/// Circular complex Gaussian with E|z|^2 = variance.
inline cd complex_normal(Rng& rng, double variance) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double sd = std::sqrt(variance / 2.0);
  const double re = n(rng);
  const double im = n(rng);
  return {sd * re, sd * im};
}

inline CMat complex_normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double variance) {
  CMat m(rows, cols);
  // Column-major fill order is part of the determinism contract.
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = complex_normal(rng, variance);
  return m;
}

}  // namespace icvec
