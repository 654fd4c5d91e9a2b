// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "icvec/backhaul.hpp"
#include "icvec/channel.hpp"
#include "icvec/channel_estimate.hpp"
#include "icvec/linalg.hpp"
#include "icvec/message.hpp"
#include "icvec/metrics.hpp"
#include "icvec/training.hpp"
#include "icvec/types.hpp"

namespace icvec {

// ---------------------------------------------------------------------------
// Centralized, data-cooperation and no-cooperation estimators

/// System-wide least squares H = Y X^H (X X^H)^-1.
inline ChannelEstimate mle_centralized(const CMat& Y, const TrainingSet& X) {
  require_dims(Y.rows() == X.stacked().rows() && Y.cols() == X.T(), "mle: Y must be KN x T");
  return ChannelEstimate::from_full(X.K(), X.N(), RightSolver(X.stacked()).solve(Y), 1);
}

/// Operator k's row group [H_1k ... H_Kk] from its own N receivers. Requires
/// every operator's training, which only data cooperation shares.
inline ChannelEstimate dc_estimate(int k, const CMat& Y_k, const TrainingSet& X) {
  require_dims(Y_k.rows() == X.N() && Y_k.cols() == X.T(), "dc_estimate: Y_k must be N x T");
  const CMat G = RightSolver(X.stacked()).solve(Y_k);
  ChannelEstimate e(X.K(), X.N(), EstimateView::RowGroup, k);
  for (int m = 0; m < X.K(); ++m) e.set_block(m, k, G.middleCols(m * X.N(), X.N()), 1);
  return e;
}

/// Self block by least squares against the operator's own training,
/// alien-FEXT treated as noise.
inline CMat ic_init(const CMat& Y_k, const OperatorTraining& X_k) {
  require_dims(Y_k.cols() == X_k.X.cols() && Y_k.rows() == X_k.X.rows(), "ic_init: Y_k must be N x T");
  return RightSolver(X_k.X).solve(Y_k);
}

inline ChannelEstimate no_coop_estimate(int k, int K, const CMat& Y_k, const OperatorTraining& X_k) {
  ChannelEstimate e(K, static_cast<int>(Y_k.rows()), EstimateView::SelfOnly, k);
  e.set_block(k, k, ic_init(Y_k, X_k), 1);
  return e;
}

struct CrbValue {
  double trace = 0.0;      // trace[sigma^2 (X X^H)^-1]
  double per_entry = 0.0;  // trace / KN; sigma^2 / T for orthogonal unit-power training
};

inline CrbValue crb(double sigma2, const CMat& Xbar) {
  if (sigma2 < 0.0) throw ConfigError("crb: negative noise power");
  const CMat G = Xbar * Xbar.adjoint();
  Eigen::LDLT<CMat> ldlt(G);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().real().minCoeff() <= 1e-12 * G.norm())
    throw NumericalError("crb: singular training Gram matrix");
  const CMat inv = ldlt.solve(CMat::Identity(G.rows(), G.cols()));
  const double tr = sigma2 * inv.trace().real();
  return {tr, tr / double(Xbar.rows())};
}

/// Bound on the normalized MSE of self and alien blocks, on the same scale as
/// normalized_mse() in ensemble mode. Alien is NaN for K = 1 or alpha = 0.
struct NormalizedCrb {
  double self_linear = 0.0;
  double alien_linear = 0.0;
  double self_db() const { return db_or_floor(self_linear); }
  double alien_db() const { return std::isnan(alien_linear) ? alien_linear : db_or_floor(alien_linear); }
};

inline NormalizedCrb normalized_crb(double sigma2, const TrainingSet& X, double alpha) {
  const int K = X.K(), N = X.N();
  const double tr = crb(sigma2, X.stacked()).trace;
  NormalizedCrb out;
  // Each row of H carries error covariance sigma^2 (X X^H)^-1; a block of
  // column group k collects N rows of the k-th diagonal sub-block.
  out.self_linear = N * tr / K / (N * (1.0 + (N - 1) * alpha * alpha));
  out.alien_linear = (K > 1 && alpha > 0.0) ? (K - 1) * N * tr / (K * (K - 1.0)) / (double(N) * N * alpha * alpha)
                                            : std::nan("");
  return out;
}

// ---------------------------------------------------------------------------
// Interference-cooperation estimation node

enum class EstimationSchedule {
  /// Alien residuals use the self block refreshed in the same round.
  Literal,
  /// Every block of round n+1 is computed from round-n state only.
  Jacobi,
};

/// Operator k's side of the iterative estimation. Holds its own received
/// training block, its own training, and its column group H_k. Per round:
///   phase 0: refresh H_kk from Y_k minus the received products; send each m
///            the residual of Y_k with every block known to k removed, then
///            solve H_km from the residual received from m;
///   phase 1: send each m the re-encoded product H_km X_k.
/// Round 0 (priming, only with an injected initial estimate) sends the
/// products of the injected blocks.
class IcEstimationNode {
 public:
  IcEstimationNode(int id, int K, CMat Y_k, OperatorTraining X_k,
                   EstimationSchedule schedule = EstimationSchedule::Literal)
      : id_(id), K_(K), N_(static_cast<int>(X_k.X.rows())), Y_(std::move(Y_k)), X_(std::move(X_k)),
        solver_(X_.X), schedule_(schedule), est_(K, N_, EstimateView::ColumnGroup, id),
        blocks_(K, CMat::Zero(N_, N_)), products_(K, CMat::Zero(N_, X_.X.cols())) {
    require_dims(Y_.rows() == N_ && Y_.cols() == X_.X.cols(), "ic node: Y_k must be N x T");
  }

  int id() const { return id_; }
  int phases() const { return 2; }
  const ChannelEstimate& estimate() const { return est_; }
  /// Largest relative Frobenius change of any block in the last round.
  double last_change() const { return last_change_; }

  /// Inject a starting column group (KN x N). Must be followed by a priming
  /// exchange (round 0) so that peers hold the matching products.
  void prime(const CMat& column_group) {
    require_dims(column_group.rows() == K_ * N_ && column_group.cols() == N_, "ic node: column group must be KN x N");
    for (int m = 0; m < K_; ++m) {
      blocks_[m] = column_group.middleRows(m * N_, N_);
      est_.set_block(id_, m, blocks_[m], 0);
    }
  }

  std::vector<InterferenceMessage> emit(int round, int phase) {
    std::vector<InterferenceMessage> out;
    if (round == 0) {
      if (phase == 0) send_products(round, phase, out);
      return out;
    }
    if (phase == 0) {
      last_change_ = 0.0;
      const CMat previous_self = blocks_[id_];
      CMat z = Y_;
      for (int m = 0; m < K_; ++m)
        if (m != id_) z -= products_[m];
      update(id_, solver_.solve(z), round);
      const CMat& self = schedule_ == EstimationSchedule::Literal ? blocks_[id_] : previous_self;
      for (int m = 0; m < K_; ++m) {
        if (m == id_) continue;
        std::vector<const CMat*> third;
        for (int p = 0; p < K_; ++p)
          if (p != id_ && p != m) third.push_back(&products_[p]);
        out.push_back(InterferenceMessage::est_residual({round, phase, id_, m}, Y_, self, X_.X, third));
      }
    } else {
      send_products(round, phase, out);
    }
    return out;
  }

  void absorb(int round, int phase, std::span<const InterferenceMessage> inbox) {
    if (round == 0) {
      if (phase == 0) take_products(inbox);
      return;
    }
    if (phase == 0) {
      const auto by = index_by_sender(inbox, id_, K_, MessageKind::EstResidual);
      for (int m = 0; m < K_; ++m)
        if (m != id_) update(m, solver_.solve(by[m]->payload()), round);
    } else {
      take_products(inbox);
    }
  }

 private:
  void send_products(int round, int phase, std::vector<InterferenceMessage>& out) const {
    for (int m = 0; m < K_; ++m)
      if (m != id_) out.push_back(InterferenceMessage::reencoded({round, phase, id_, m}, blocks_[m], X_.X));
  }

  void take_products(std::span<const InterferenceMessage> inbox) {
    const auto by = index_by_sender(inbox, id_, K_, MessageKind::EstReencoded);
    for (int m = 0; m < K_; ++m)
      if (m != id_) products_[m] = by[m]->payload();
  }

  void update(int to, CMat b, int round) {
    const double denom = std::max(b.norm(), 1e-300);
    last_change_ = std::max(last_change_, (b - blocks_[to]).norm() / denom);
    blocks_[to] = std::move(b);
    est_.set_block(id_, to, blocks_[to], round);
  }

  int id_;
  int K_;
  int N_;
  CMat Y_;
  OperatorTraining X_;
  RightSolver solver_;
  EstimationSchedule schedule_;
  ChannelEstimate est_;
  std::vector<CMat> blocks_;    // H_km for every m (self at m = id)
  std::vector<CMat> products_;  // H_mk X_m received from m
  double last_change_ = 0.0;
};

struct IcEstimationOptions {
  int rounds = 10;
  EstimationSchedule schedule = EstimationSchedule::Literal;
  /// Stop once no block changed by more than `tolerance` (relative).
  bool early_stop = false;
  double tolerance = 1e-8;
  BusOptions bus;
  /// Optional starting estimate, full KN x KN.
  std::optional<CMat> initial;
  /// Called after every round with the node states.
  std::function<void(int, std::span<const IcEstimationNode>)> observer;
};

struct IcEstimationRun {
  std::vector<ChannelEstimate> estimates;  // operator k holds {H_k1 ... H_kK}
  RoundLog log;
  int rounds_run = 0;
};

/// Drive K estimation nodes over the bus. Y is KN x T; the harness hands each
/// node only its own rows of Y and its own training.
inline IcEstimationRun run_ic_estimation(const CMat& Y, const TrainingSet& X, const IcEstimationOptions& opt = {}) {
  const int K = X.K(), N = X.N();
  require_dims(Y.rows() == K * N && Y.cols() == X.T(), "ic estimation: Y must be KN x T");
  std::vector<IcEstimationNode> nodes;
  nodes.reserve(K);
  for (int k = 0; k < K; ++k) nodes.emplace_back(k, K, Y.middleRows(k * N, N), X.for_operator(k), opt.schedule);

  if (opt.initial) {
    require_dims(opt.initial->rows() == K * N && opt.initial->cols() == K * N, "ic estimation: initial must be KN x KN");
    for (int k = 0; k < K; ++k) nodes[k].prime(opt.initial->middleCols(k * N, N));
    BusOptions prime = opt.bus;
    prime.first_round = 0;
    const RoundLog plog = run_rounds(std::span<IcEstimationNode>(nodes), 1, prime);
    if (plog.aborted()) throw ProtocolError("ic estimation priming aborted: " + plog.abort_reason());
  }

  IcEstimationRun run;
  run.log = run_rounds(std::span<IcEstimationNode>(nodes), opt.rounds, opt.bus, [&](int r) {
    run.rounds_run = r;
    if (opt.observer) opt.observer(r, std::span<const IcEstimationNode>(nodes));
    if (!opt.early_stop) return true;
    double change = 0.0;
    for (const auto& n : nodes) change = std::max(change, n.last_change());
    return change >= opt.tolerance;
  });
  for (const auto& n : nodes) run.estimates.push_back(n.estimate());
  return run;
}

// ---------------------------------------------------------------------------
// Per-iteration trace

struct EstimationTraceRow {
  int iteration = 0;
  double mse_self_db = 0.0;
  double mse_alien_db = 0.0;
  double crb_db = 0.0;        // normalized self-block bound
  double crb_alien_db = 0.0;  // normalized alien-block bound
  double residual = 0.0;      // ||Y - H X||_F
  std::size_t msgs_sent = 0;  // messages in this round
};

struct EstimationTrace {
  std::vector<EstimationTraceRow> rows;

  void write_csv(std::ostream& os) const {
    os << "iteration,mse_self_db,mse_alien_db,crb_db,crb_alien_db,residual,msgs_sent\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,%.9g,%zu\n", r.iteration, r.mse_self_db, r.mse_alien_db,
                    r.crb_db, r.crb_alien_db, r.residual, r.msgs_sent);
      os << buf;
    }
  }
};

/// Per-trial accumulators behind a trace, so trials can be averaged before
/// converting to dB.
struct EstimationTrialCurve {
  std::vector<MseAccumulator> mse;  // index = iteration - 1
  std::vector<double> residual;
  std::vector<std::size_t> msgs;
};

/// One IC estimation trial against a known channel. Every round is scored
/// against the truth; a run that stops early repeats its last state.
inline EstimationTrialCurve ic_estimation_curve(const MultiOperatorChannel& H, const TrainingSet& X, const CMat& Y,
                                                double alpha, IcEstimationOptions opt) {
  EstimationTrialCurve c;
  auto user = opt.observer;
  opt.observer = [&](int r, std::span<const IcEstimationNode> nodes) {
    std::vector<ChannelEstimate> parts;
    for (const auto& n : nodes) parts.push_back(n.estimate());
    MseAccumulator acc;
    for (const auto& p : parts) acc += normalized_mse(p, H, alpha);
    c.mse.push_back(acc);
    c.residual.push_back((Y - assemble(parts) * X.stacked()).norm());
    if (user) user(r, nodes);
  };
  const auto run = run_ic_estimation(Y, X, opt);
  for (int r = 1; r <= run.rounds_run; ++r) c.msgs.push_back(run.log.messages_in_round(r));
  while (static_cast<int>(c.mse.size()) < opt.rounds && !c.mse.empty()) {
    c.mse.push_back(c.mse.back());
    c.residual.push_back(c.residual.back());
    c.msgs.push_back(0);
  }
  return c;
}

}  // namespace icvec
