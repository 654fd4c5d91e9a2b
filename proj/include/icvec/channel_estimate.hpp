// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <vector>

#include "icvec/channel.hpp"
#include "icvec/types.hpp"

namespace icvec {

/// Which blocks an estimate may hold.
enum class EstimateView {
  Full,         // every block (centralized)
  ColumnGroup,  // {H_km : all m} of the owner (interference cooperation)
  RowGroup,     // {H_mk : all m} of the owner (data cooperation)
  SelfOnly,     // H_kk (no cooperation)
};

/// Block-structured channel estimate with per-block validity and the
/// iteration at which each block was last written.
class ChannelEstimate {
 public:
  ChannelEstimate() = default;
  ChannelEstimate(int K, int N, EstimateView view, int owner = 0)
      : K_(K), N_(N), view_(view), owner_(owner), H_(CMat::Zero(K * N, K * N)),
        valid_(K * K, false), updated_(K * K, -1) {}

  int K() const { return K_; }
  int N() const { return N_; }
  EstimateView view() const { return view_; }
  int owner() const { return owner_; }

  bool may_hold(int from, int to) const {
    switch (view_) {
      case EstimateView::Full: return true;
      case EstimateView::ColumnGroup: return from == owner_;
      case EstimateView::RowGroup: return to == owner_;
      case EstimateView::SelfOnly: return from == owner_ && to == owner_;
    }
    return false;
  }
  bool holds(int from, int to) const { return valid_[idx(from, to)]; }
  int updated_at(int from, int to) const { return updated_[idx(from, to)]; }

  auto block(int from, int to) const {
    if (!holds(from, to)) throw ConfigError("estimate: block not held by this operator");
    return H_.block(to * N_, from * N_, N_, N_);
  }

  void set_block(int from, int to, const CMat& b, int iteration) {
    if (!may_hold(from, to)) throw ConfigError("estimate: block outside this operator's view");
    require_dims(b.rows() == N_ && b.cols() == N_, "estimate: block must be N x N");
    H_.block(to * N_, from * N_, N_, N_) = b;
    valid_[idx(from, to)] = true;
    updated_[idx(from, to)] = iteration;
  }

  /// KN x KN matrix with zeros in blocks not held.
  const CMat& dense() const { return H_; }

  static ChannelEstimate from_full(int K, int N, const CMat& H, int iteration = 0) {
    require_dims(H.rows() == K * N && H.cols() == K * N, "estimate: full matrix must be KN x KN");
    ChannelEstimate e(K, N, EstimateView::Full);
    e.H_ = H;
    std::fill(e.valid_.begin(), e.valid_.end(), true);
    std::fill(e.updated_.begin(), e.updated_.end(), iteration);
    return e;
  }

 private:
  std::size_t idx(int from, int to) const {
    if (from < 0 || from >= K_ || to < 0 || to >= K_) throw DimensionError("estimate: operator index out of range");
    return static_cast<std::size_t>(from * K_ + to);
  }

  int K_ = 0;
  int N_ = 0;
  EstimateView view_ = EstimateView::Full;
  int owner_ = 0;
  CMat H_;
  std::vector<bool> valid_;
  std::vector<int> updated_;
};

/// Merge per-operator partial estimates into one full matrix (harness use).
/// Each block must be held by exactly one of the inputs.
inline CMat assemble(const std::vector<ChannelEstimate>& parts) {
  if (parts.empty()) throw ConfigError("assemble: no estimates");
  const int K = parts[0].K(), N = parts[0].N();
  CMat H = CMat::Zero(K * N, K * N);
  for (int from = 0; from < K; ++from)
    for (int to = 0; to < K; ++to) {
      int n = 0;
      for (const auto& p : parts)
        if (p.holds(from, to)) {
          H.block(to * N, from * N, N, N) = p.block(from, to);
          ++n;
        }
      if (n != 1) throw ConfigError("assemble: each block must be held by exactly one estimate");
    }
  return H;
}

}  // namespace icvec
