// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <cstdio>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "icvec/backhaul.hpp"
#include "icvec/channel.hpp"
#include "icvec/constellation.hpp"
#include "icvec/dfe.hpp"
#include "icvec/linalg.hpp"
#include "icvec/message.hpp"
#include "icvec/metrics.hpp"
#include "icvec/soft_detector.hpp"
#include "icvec/types.hpp"

namespace icvec {

struct DetectionResult {
  CMat decided;  // symbols after g_Lambda / slicing
  CMat pre;      // decision variables
};

// ---------------------------------------------------------------------------
// Closed-form helpers

/// Noise-power degradation at the decision of data cooperation relative to
/// joint processing of all KN receivers.
inline double dc_loss(int N, int K, double alpha) {
  if (N < 1 || K < 1 || alpha < 0.0) throw ConfigError("dc_loss: needs N, K >= 1 and alpha >= 0");
  const double a2 = alpha * alpha;
  return 1.0 + N * (K - 1) * a2 / (1.0 + (N - 1) * a2);
}

/// Alien-FEXT plus AWGN power seen by one receiver before any cooperation.
inline double interference_plus_noise(int N, int K, double alpha, double sigma2) {
  return (K - 1) * N * alpha * alpha + sigma2;
}

/// Decision-noise variance of the first data-cooperation pass.
inline double init_variance_dc(int N, int K, double alpha, double sigma2) {
  return interference_plus_noise(N, K, alpha, sigma2) / (1.0 + (N - 1) * alpha * alpha);
}

/// Residual-power estimate of the noise behind z = H x + n, per entry,
/// floored at `floor`.
inline double update_sigma_n(const CMat& z, const CMat& H, const CMat& x, double floor) {
  require_dims(z.rows() == H.rows() && H.cols() == x.rows() && z.cols() == x.cols(), "update_sigma_n: shape mismatch");
  return std::max((z - H * x).squaredNorm() / double(z.size()), floor);
}

// ---------------------------------------------------------------------------
// Centralized references

inline DetectionResult zf_centralized(const CMat& y, const CMat& H, const Constellation& c) {
  require_dims(H.rows() == H.cols() && y.rows() == H.rows(), "zf: H must be square and match y");
  if (condition_number(H) > 1e12) throw NumericalError("zf: channel is singular or ill-conditioned");
  DetectionResult r;
  r.pre = H.partialPivLu().solve(y);
  r.decided = r.pre.unaryExpr([&c](cd v) { return c.slice(v); });
  return r;
}

/// One pass of the MMSE matrix-DFE over the whole system with soft feedback.
inline DetectionResult mmse_centralized(const CMat& y, const CMat& H, double sigma2, const Constellation& c,
                                        Decision mode = Decision::Soft) {
  require_dims(y.rows() == H.rows(), "mmse: y must match H");
  if (condition_number(H) > 1e12) throw NumericalError("mmse: channel is singular or ill-conditioned");
  const DfeFactorization f(H, sigma2);
  auto o = dfe_detect(f, y, sigma2, mode, c);
  return {std::move(o.decided), std::move(o.pre)};
}

/// Fusion-center soft MMSE parallel interference cancellation, seeded by the
/// MMSE-DFE. Per symbol i the filter is (H V H^H + sigma^2 I)^-1 h_i with V
/// the posterior variances of the other symbols and unit variance for i; the
/// output is rescaled to be unbiased. `history`, if given, receives the
/// decision variables of the seed pass and of every iteration.
inline DetectionResult centralized_pic(const CMat& y, const CMat& H, double sigma2, const Constellation& c,
                                       int iterations, std::vector<CMat>* history = nullptr) {
  require_dims(y.rows() == H.rows(), "pic: y must match H");
  const Eigen::Index n = H.cols(), L = y.cols();
  const DfeFactorization f(H, sigma2);
  const auto init = dfe_detect(f, y, sigma2, Decision::Soft, c);
  const SoftDetector g(c);
  DetectionResult r{init.decided, init.pre};
  RMat var(n, L);
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index i = 0; i < n; ++i)
      var(i, l) = g.estimate_with_variance(init.pre(i, l), init.layer_variance(i, l)).second;
  if (history) history->push_back(r.pre);

  for (int it = 0; it < iterations; ++it) {
    for (Eigen::Index l = 0; l < L; ++l) {
      CMat C = H * var.col(l).cast<cd>().asDiagonal() * H.adjoint();
      C.diagonal().array() += sigma2;
      const Eigen::LLT<CMat> llt(C);
      if (llt.info() != Eigen::Success) throw NumericalError("pic: covariance not positive definite");
      const CMat W = llt.solve(H);  // C^-1 h_i for every i
      const CVec resid = y.col(l) - H * r.decided.col(l);
      CVec next(n), pre(n);
      RVec nvar(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        // Own variance raised to one by a rank-one update of C.
        const double boost = 1.0 - var(i, l);
        const cd hw = H.col(i).dot(W.col(i));
        const CVec w = W.col(i) / (1.0 + boost * hw.real());
        const double gain = std::max(H.col(i).dot(w).real(), 1e-300);
        const CVec zi = resid + H.col(i) * r.decided(i, l);
        pre(i) = w.dot(zi) / gain;
        const double ev = std::max((1.0 - gain) / gain, 1e-300);
        const auto [m, v] = g.estimate_with_variance(pre(i), ev);
        next(i) = m;
        nvar(i) = v;
      }
      r.decided.col(l) = next;
      r.pre.col(l) = pre;
      var.col(l) = nvar;
    }
    if (history) history->push_back(r.pre);
  }
  return r;
}

// ---------------------------------------------------------------------------
// No cooperation

/// Local MMSE-DFE on the self block, alien-FEXT treated as extra noise.
inline DetectionResult no_coop_mud(const CMat& y_k, const CMat& H_kk, double alpha, int K, int N, double sigma2,
                                   const Constellation& c, Decision mode = Decision::Soft) {
  require_dims(H_kk.rows() == N && H_kk.cols() == N && y_k.rows() == N, "no_coop: dimension mismatch");
  const double reg = interference_plus_noise(N, K, alpha, sigma2);
  auto o = dfe_detect(DfeFactorization(H_kk, reg), y_k, reg, mode, c);
  return {std::move(o.decided), std::move(o.pre)};
}

// ---------------------------------------------------------------------------
// Cooperative nodes

struct MudNodeOptions {
  Decision decision = Decision::Soft;
  /// MMSE metric (QR of the sigma_n-augmented channel); false gives ZF.
  bool mmse = true;
  double sigma2 = 0.1;
  /// Noise power assumed by the first, local-only pass.
  double init_noise = 0.1;
  /// sigma_n^2 never drops below floor_factor * sigma2.
  double floor_factor = 1e-6;
  /// Re-estimate sigma_n^2 from the residual after every round.
  bool adapt_sigma = true;
};

/// Linear ZF iteration without slicing, for checks against the plain block
/// Jacobi recursion.
inline MudNodeOptions linear_mode(MudNodeOptions o) {
  o.decision = Decision::Linear;
  o.mmse = false;
  return o;
}

namespace detail {

inline DfeOutput local_pass(const CMat& H, const CMat& z, double noise, const MudNodeOptions& o,
                            const Constellation& c) {
  return dfe_detect(DfeFactorization(H, o.mmse ? noise : 0.0), z, noise, o.decision, c);
}

}  // namespace detail

/// Data cooperation: decoded symbols are exchanged; operator k holds its row
/// group {H_mk} and cancels the alien contributions before a local DFE.
class DcMudNode {
 public:
  DcMudNode(int id, int K, CMat y_k, CMat row_group, const Constellation& c, MudNodeOptions o)
      : id_(id), K_(K), N_(static_cast<int>(y_k.rows())), y_(std::move(y_k)), G_(std::move(row_group)), c_(&c),
        o_(o) {
    require_dims(G_.rows() == N_ && G_.cols() == K * N_, "dc node: row group must be N x KN");
    sigma_n2_ = o_.init_noise;
    const auto out = detail::local_pass(self(), y_, sigma_n2_, o_, *c_);
    x_ = out.decided;
    pre_ = out.pre;
  }

  int id() const { return id_; }
  int phases() const { return 1; }
  const CMat& symbols() const { return x_; }
  const CMat& decision_variables() const { return pre_; }
  double sigma_n2() const { return sigma_n2_; }

  std::vector<InterferenceMessage> emit(int round, int phase) const {
    std::vector<InterferenceMessage> out;
    for (int m = 0; m < K_; ++m)
      if (m != id_) out.push_back(InterferenceMessage::dc_symbols({round, phase, id_, m}, x_));
    return out;
  }

  void absorb(int, int, std::span<const InterferenceMessage> inbox) {
    const auto by = index_by_sender(inbox, id_, K_, MessageKind::DcSymbols);
    CMat z = y_;
    for (int m = 0; m < K_; ++m)
      if (m != id_) z -= G_.middleCols(m * N_, N_) * by[m]->payload();
    const auto out = detail::local_pass(self(), z, sigma_n2_, o_, *c_);
    x_ = out.decided;
    pre_ = out.pre;
    if (o_.adapt_sigma) sigma_n2_ = update_sigma_n(z, self(), x_, o_.floor_factor * o_.sigma2);
  }

 private:
  CMat self() const { return G_.middleCols(id_ * N_, N_); }

  int id_;
  int K_;
  int N_;
  CMat y_;
  CMat G_;  // [H_1k ... H_Kk]
  const Constellation* c_;
  MudNodeOptions o_;
  CMat x_, pre_;
  double sigma_n2_ = 0.0;
};

/// Interference cooperation: operator k holds its column group
/// H_k = [H_k1; ...; H_kK] and never sees other operators' symbols. Per round:
///   phase 0: send each m the re-mixed product H_km x_k;
///   phase 1: send each m its stripped signal y_k - H_kk x_k - sum_l H_lk x_l
///            (l != k, m), which isolates H_mk x_m plus noise;
/// then stack the KN observations and run the DFE on the tall H_k.
class IcMudNode {
 public:
  IcMudNode(int id, int K, CMat y_k, CMat column_group, const Constellation& c, MudNodeOptions o)
      : id_(id), K_(K), N_(static_cast<int>(y_k.rows())), y_(std::move(y_k)), Hk_(std::move(column_group)), c_(&c),
        o_(o), products_(K), stripped_(K) {
    require_dims(Hk_.rows() == K * N_ && Hk_.cols() == N_, "ic mud node: column group must be KN x N");
    sigma_n2_ = o_.init_noise;
    const auto out = detail::local_pass(block(id_), y_, sigma_n2_, o_, *c_);
    x_ = out.decided;
    pre_ = out.pre;
  }

  int id() const { return id_; }
  int phases() const { return 2; }
  const CMat& symbols() const { return x_; }
  const CMat& decision_variables() const { return pre_; }
  double sigma_n2() const { return sigma_n2_; }

  /// Replace the current decisions, e.g. with genie symbols in tests.
  void set_symbols(const CMat& x) {
    require_dims(x.rows() == N_ && x.cols() == y_.cols(), "ic mud node: symbol block shape");
    x_ = x;
  }

  std::vector<InterferenceMessage> emit(int round, int phase) const {
    std::vector<InterferenceMessage> out;
    for (int m = 0; m < K_; ++m) {
      if (m == id_) continue;
      if (phase == 0) {
        out.push_back(InterferenceMessage::remixed({round, phase, id_, m}, block(m), x_));
      } else {
        std::vector<const CMat*> third;
        for (int l = 0; l < K_; ++l)
          if (l != id_ && l != m) third.push_back(&products_[l]);
        out.push_back(InterferenceMessage::mud_stripped({round, phase, id_, m}, y_, block(id_), x_, third));
      }
    }
    return out;
  }

  void absorb(int, int phase, std::span<const InterferenceMessage> inbox) {
    if (phase == 0) {
      const auto by = index_by_sender(inbox, id_, K_, MessageKind::MudRemixed);
      for (int m = 0; m < K_; ++m)
        if (m != id_) products_[m] = by[m]->payload();
      return;
    }
    const auto by = index_by_sender(inbox, id_, K_, MessageKind::MudStripped);
    CMat z(K_ * N_, y_.cols());
    for (int m = 0; m < K_; ++m) {
      if (m == id_) continue;
      stripped_[m] = by[m]->payload();
      z.middleRows(m * N_, N_) = stripped_[m];
    }
    CMat own = y_;
    for (int m = 0; m < K_; ++m)
      if (m != id_) own -= products_[m];
    z.middleRows(id_ * N_, N_) = own;

    const auto out = detail::local_pass(Hk_, z, sigma_n2_, o_, *c_);
    x_ = out.decided;
    pre_ = out.pre;
    if (o_.adapt_sigma) sigma_n2_ = update_sigma_n(z, Hk_, x_, o_.floor_factor * o_.sigma2);
  }

 private:
  CMat block(int to) const { return Hk_.middleRows(to * N_, N_); }

  int id_;
  int K_;
  int N_;
  CMat y_;
  CMat Hk_;
  const Constellation* c_;
  MudNodeOptions o_;
  std::vector<CMat> products_;  // H_mk x_m from m
  std::vector<CMat> stripped_;  // from m: isolates H_km x_k
  CMat x_, pre_;
  double sigma_n2_ = 0.0;
};

// ---------------------------------------------------------------------------
// Drivers and traces

struct DetectionTraceRow {
  int iteration = 0;
  double snr_d_db = 0.0;
  double ser = 0.0;
  double sigma_n2 = 0.0;      // mean over operators
  std::size_t msgs_sent = 0;  // messages in this round
};

struct DetectionTrace {
  std::vector<DetectionTraceRow> rows;

  void write_csv(std::ostream& os) const {
    os << "iteration,snr_d_db,ser,sigma_n2,msgs_sent\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.9g,%zu\n", r.iteration, r.snr_d_db, r.ser, r.sigma_n2,
                    r.msgs_sent);
      os << buf;
    }
  }
};

/// Final state of a cooperative MUD run plus a per-iteration snapshot
/// (index 0 = local initial pass).
struct MudRun {
  CMat decided;  // KN x L
  CMat pre;
  RoundLog log;
  std::vector<CMat> decided_history;
  std::vector<CMat> pre_history;
  std::vector<double> sigma_history;
};

namespace detail {

template <class Node>
void snapshot(std::span<const Node> nodes, int N, MudRun& run) {
  const Eigen::Index L = nodes[0].symbols().cols();
  CMat d(nodes.size() * N, L), p(nodes.size() * N, L);
  double s = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    d.middleRows(k * N, N) = nodes[k].symbols();
    p.middleRows(k * N, N) = nodes[k].decision_variables();
    s += nodes[k].sigma_n2();
  }
  run.decided_history.push_back(d);
  run.pre_history.push_back(p);
  run.sigma_history.push_back(s / double(nodes.size()));
}

template <class Node>
MudRun drive(std::vector<Node>& nodes, int N, int rounds, const BusOptions& bus) {
  MudRun run;
  snapshot(std::span<const Node>(nodes), N, run);
  run.log = run_rounds(std::span<Node>(nodes), rounds, bus, [&](int) {
    snapshot(std::span<const Node>(nodes), N, run);
    return true;
  });
  run.decided = run.decided_history.back();
  run.pre = run.pre_history.back();
  return run;
}

}  // namespace detail

/// Interference-cooperation MUD. `H` is the channel the operators believe
/// (true or estimated); node k is handed only its column group.
inline MudRun run_ic_mud(const MultiOperatorChannel& H, const CMat& y, const Constellation& c, int rounds,
                         const MudNodeOptions& o, const BusOptions& bus = {}) {
  const int K = H.K(), N = H.N();
  require_dims(y.rows() == K * N, "ic mud: y must have KN rows");
  std::vector<IcMudNode> nodes;
  nodes.reserve(K);
  for (int k = 0; k < K; ++k) nodes.emplace_back(k, K, y.middleRows(k * N, N), H.column_group(k), c, o);
  return detail::drive(nodes, N, rounds, bus);
}

/// Data-cooperation MUD; node k is handed its row group.
inline MudRun run_dc_mud(const MultiOperatorChannel& H, const CMat& y, const Constellation& c, int rounds,
                         const MudNodeOptions& o, const BusOptions& bus = {}) {
  const int K = H.K(), N = H.N();
  require_dims(y.rows() == K * N, "dc mud: y must have KN rows");
  std::vector<DcMudNode> nodes;
  nodes.reserve(K);
  for (int k = 0; k < K; ++k) nodes.emplace_back(k, K, y.middleRows(k * N, N), H.row_group(k), c, o);
  return detail::drive(nodes, N, rounds, bus);
}

/// Score a run against the transmitted symbols, one row per iteration.
inline DetectionTrace detection_trace(const MudRun& run, const CMat& truth, const Constellation& c) {
  DetectionTrace t;
  for (std::size_t n = 0; n < run.pre_history.size(); ++n) {
    const CMat sliced = run.pre_history[n].unaryExpr([&c](cd v) { return c.slice(v); });
    t.rows.push_back({static_cast<int>(n), snr_decision(run.pre_history[n], truth), symbol_error_rate(sliced, truth),
                      run.sigma_history[n], n == 0 ? 0 : run.log.messages_in_round(static_cast<int>(n))});
  }
  return t;
}

}  // namespace icvec
