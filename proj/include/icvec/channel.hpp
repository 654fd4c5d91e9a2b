// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <numbers>
#include <random>

#include "icvec/config.hpp"
#include "icvec/rng.hpp"
#include "icvec/types.hpp"

namespace icvec {

/// KN x KN multi-operator channel.
///
/// Block H_ij couples the N lines of operator i (transmitters) into the N
/// receivers of operator j, i.e. it sits at row group j, column group i of the
/// full matrix. Two groupings are exposed:
///   column_group(k) = H_k   = [H_k1; H_k2; ...; H_kK]   (KN x N)
///   row_group(k)    = G_k^T = [H_1k, H_2k, ..., H_Kk]   (N x KN)
class MultiOperatorChannel {
 public:
  MultiOperatorChannel() = default;
  MultiOperatorChannel(int K, int N) : K_(K), N_(N), H_(CMat::Zero(K * N, K * N)) {}
  MultiOperatorChannel(int K, int N, CMat full) : K_(K), N_(N), H_(std::move(full)) {
    require_dims(H_.rows() == K * N && H_.cols() == K * N, "channel: full matrix must be KN x KN");
  }

  int K() const { return K_; }
  int N() const { return N_; }
  const CMat& full() const { return H_; }

  auto block(int from, int to) const { return H_.block(to * N_, from * N_, N_, N_); }
  void set_block(int from, int to, const CMat& b) {
    require_dims(b.rows() == N_ && b.cols() == N_, "channel: block must be N x N");
    H_.block(to * N_, from * N_, N_, N_) = b;
  }

  auto column_group(int k) const { return H_.middleCols(k * N_, N_); }
  auto row_group(int k) const { return H_.middleRows(k * N_, N_); }

  /// Reassemble H from the K column groups (each KN x N).
  static MultiOperatorChannel from_column_groups(int K, int N, const std::vector<CMat>& groups) {
    require_dims(static_cast<int>(groups.size()) == K, "channel: need K column groups");
    CMat H(K * N, K * N);
    for (int k = 0; k < K; ++k) {
      require_dims(groups[k].rows() == K * N && groups[k].cols() == N, "channel: column group must be KN x N");
      H.middleCols(k * N, N) = groups[k];
    }
    return {K, N, std::move(H)};
  }

  static MultiOperatorChannel from_row_groups(int K, int N, const std::vector<CMat>& groups) {
    require_dims(static_cast<int>(groups.size()) == K, "channel: need K row groups");
    CMat H(K * N, K * N);
    for (int k = 0; k < K; ++k) {
      require_dims(groups[k].rows() == N && groups[k].cols() == K * N, "channel: row group must be N x KN");
      H.middleRows(k * N, N) = groups[k];
    }
    return {K, N, std::move(H)};
  }

 private:
  int K_ = 0;
  int N_ = 0;
  CMat H_;
};

/// Statistical FEXT channel: unit-modulus random-phase direct paths, every
/// other entry (self- and alien-FEXT alike) CN(0, alpha^2).
inline MultiOperatorChannel synth_channel(const ScenarioConfig& cfg, Rng& rng) {
  cfg.validate();
  const int K = cfg.K(), N = cfg.N(), KN = cfg.KN();
  const double alpha = cfg.alpha_value();
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  CMat H(KN, KN);
  for (int c = 0; c < KN; ++c) {
    for (int r = 0; r < KN; ++r) {
      const bool direct = (r == c);
      if (direct) {
        H(r, c) = std::polar(1.0, phase(rng));
      } else {
        H(r, c) = complex_normal(rng, alpha * alpha);
      }
    }
  }
  return {K, N, std::move(H)};
}

}  // namespace icvec
