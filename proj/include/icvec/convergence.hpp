// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <algorithm>
#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "icvec/channel.hpp"
#include "icvec/linalg.hpp"
#include "icvec/training.hpp"
#include "icvec/types.hpp"

namespace icvec {

enum class SplitKind { Estimation, Detection };

/// Kronecker product of two dense matrices.
inline CMat kron(const CMat& A, const CMat& B) {
  CMat out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

/// Block Jacobi splitting A = D - F of a stacked least-squares system
/// b = A v, iterated as D v' = F v + b (in the least-squares sense), i.e.
/// v' = J v + c with J = (D^H D)^-1 D^H F and c = (D^H D)^-1 D^H b.
///
/// Unknown ordering:
///   estimation: v = [vec(H_1); ...; vec(H_K)], H_k the KN x N column group,
///               column-major; J = core (x) I_KN.
///   detection:  v = [x_1; ...; x_K]; J = core.
struct JacobiSplit {
  SplitKind kind = SplitKind::Detection;
  int K = 0;
  int N = 0;
  CMat core;
  CVec offset;  // c; empty when no right-hand side was given
  // Dense factors, present only below the materialization cap.
  std::optional<CMat> D;
  std::optional<CMat> F;
  std::optional<CVec> b;

  Eigen::Index unknowns() const { return kind == SplitKind::Estimation ? core.rows() * K * N : core.rows(); }
  Eigen::Index replication() const { return kind == SplitKind::Estimation ? K * N : 1; }

  /// Operator form: J v without forming J.
  CVec apply(const CVec& v) const {
    require_dims(v.size() == unknowns(), "jacobi: vector length mismatch");
    if (kind == SplitKind::Detection) return core * v;
    const Eigen::Index r = replication();
    // (core (x) I_r) v  ==  vec(V core^T) with V the r x n reshaping of v.
    Eigen::Map<const CMat> V(v.data(), r, core.cols());
    CMat out = V * core.transpose();
    return Eigen::Map<const CVec>(out.data(), out.size());
  }

  /// Dense J; only for K^2 N^2 <= `cap` unknowns in the estimation split.
  CMat dense_J(Eigen::Index cap = 4096) const {
    if (kind == SplitKind::Detection) return core;
    if (unknowns() > cap) throw ConfigError("jacobi: dense iteration matrix above the size cap; use operator form");
    return kron(core, CMat::Identity(replication(), replication()));
  }

  CVec step(const CVec& v) const {
    if (offset.size() == 0) throw ConfigError("jacobi: split has no right-hand side");
    return apply(v) + offset;
  }
};

/// Dense D/F/b are built only when they stay below this many entries.
inline constexpr Eigen::Index kDenseEntryCap = Eigen::Index{1} << 22;

/// Estimation split from the training alone; pass Y (KN x T) to also get the
/// right-hand side and offset. `dense_factors = false` skips D/F/b.
inline JacobiSplit build_split_estimation(const TrainingSet& X, const CMat* Y = nullptr, bool dense_factors = true) {
  const int K = X.K(), N = X.N(), KN = K * N;
  const Eigen::Index T = X.T();
  if (Eigen::Index(KN) * KN > (Eigen::Index{1} << 24)) throw ConfigError("jacobi: K^2 N^2 exceeds the supported size");
  JacobiSplit s;
  s.kind = SplitKind::Estimation;
  s.K = K;
  s.N = N;
  s.core = CMat::Zero(KN, KN);
  std::vector<CMat> Xt(K);  // X_k^T, T x N
  for (int k = 0; k < K; ++k) Xt[k] = X.for_operator(k).X.transpose();
  for (int k = 0; k < K; ++k) {
    // (conj(X_k) X_k^T)^-1 conj(X_k) X_m^T == least-squares solve on X_k^T.
    Eigen::ColPivHouseholderQR<CMat> qr(Xt[k]);
    qr.setThreshold(1e-12);
    if (qr.rank() < N) throw NumericalError("jacobi: training of operator " + std::to_string(k) + " is rank deficient");
    for (int m = 0; m < K; ++m)
      if (m != k) s.core.block(k * N, m * N, N, N) = -qr.solve(Xt[m]);
  }
  if (Y) {
    require_dims(Y->rows() == KN && Y->cols() == T, "jacobi: Y must be KN x T");
    s.offset.resize(s.unknowns());
    for (int k = 0; k < K; ++k) {
      const CMat Hk = RightSolver(X.for_operator(k).X).solve(*Y);  // KN x N
      s.offset.segment(Eigen::Index(k) * KN * N, Eigen::Index(KN) * N) = Eigen::Map<const CVec>(Hk.data(), Hk.size());
    }
  }
  const Eigen::Index rows = Eigen::Index(K) * T * KN, cols = s.unknowns();
  if (dense_factors && rows * cols <= kDenseEntryCap) {
    const CMat I = CMat::Identity(KN, KN);
    std::vector<CMat> blk(K);
    for (int k = 0; k < K; ++k) blk[k] = kron(Xt[k], I);  // (T KN) x (N KN)
    const Eigen::Index br = T * KN, bc = Eigen::Index(N) * KN;
    CMat D = CMat::Zero(rows, cols), F = CMat::Zero(rows, cols);
    for (int k = 0; k < K; ++k)
      for (int m = 0; m < K; ++m) {
        if (m == k)
          D.block(k * br, m * bc, br, bc) = blk[m];
        else
          F.block(k * br, m * bc, br, bc) = -blk[m];
      }
    s.D = std::move(D);
    s.F = std::move(F);
    if (Y) {
      const CVec vy = Eigen::Map<const CVec>(Y->data(), Y->size());
      CVec b(rows);
      for (int k = 0; k < K; ++k) b.segment(k * br, br) = vy;
      s.b = std::move(b);
    }
  }
  return s;
}

/// Detection split A = 1_K (x) H, D = blockdiag(H_1 ... H_K). Pass y (KN) for
/// the right-hand side.
inline JacobiSplit build_split_detection(const MultiOperatorChannel& H, const CVec* y = nullptr) {
  const int K = H.K(), N = H.N(), KN = K * N;
  JacobiSplit s;
  s.kind = SplitKind::Detection;
  s.K = K;
  s.N = N;
  s.core = CMat::Zero(KN, KN);
  std::vector<Eigen::ColPivHouseholderQR<CMat>> qr;
  qr.reserve(K);
  for (int k = 0; k < K; ++k) {
    qr.emplace_back(CMat(H.column_group(k)));
    qr.back().setThreshold(1e-12);
    if (qr.back().rank() < N) throw NumericalError("jacobi: column group " + std::to_string(k) + " is rank deficient");
    for (int m = 0; m < K; ++m)
      if (m != k) s.core.block(k * N, m * N, N, N) = -qr.back().solve(CMat(H.column_group(m)));
  }
  CMat D = CMat::Zero(Eigen::Index(K) * KN, KN), F = CMat::Zero(Eigen::Index(K) * KN, KN);
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < K; ++m) {
      if (m == k)
        D.block(k * KN, m * N, KN, N) = H.column_group(m);
      else
        F.block(k * KN, m * N, KN, N) = -H.column_group(m);
    }
  s.D = std::move(D);
  s.F = std::move(F);
  if (y) {
    require_dims(y->size() == KN, "jacobi: y must have KN entries");
    s.offset.resize(KN);
    for (int k = 0; k < K; ++k) s.offset.segment(k * N, N) = qr[k].solve(*y);
    CVec b(Eigen::Index(K) * KN);
    for (int k = 0; k < K; ++k) b.segment(k * KN, KN) = *y;
    s.b = std::move(b);
  }
  return s;
}

/// Explicit recursion D v' = F v + b on the dense factors (requires D, F and
/// b). D is block diagonal with tall blocks; each block is factored once.
class ExplicitJacobi {
 public:
  explicit ExplicitJacobi(const JacobiSplit& s) : s_(s) {
    if (!s.D || !s.F || !s.b) throw ConfigError("jacobi: dense factors not materialized");
    br_ = s.D->rows() / s.K;
    bc_ = s.D->cols() / s.K;
    for (Eigen::Index k = 0; k < s.K; ++k) qr_.emplace_back(CMat(s.D->block(k * br_, k * bc_, br_, bc_)));
  }

  CVec step(const CVec& v) const {
    require_dims(v.size() == s_.D->cols(), "jacobi: vector length mismatch");
    const CVec rhs = *s_.F * v + *s_.b;
    CVec out(s_.D->cols());
    for (Eigen::Index k = 0; k < s_.K; ++k) out.segment(k * bc_, bc_) = qr_[k].solve(rhs.segment(k * br_, br_));
    return out;
  }

 private:
  const JacobiSplit& s_;
  Eigen::Index br_ = 0, bc_ = 0;
  std::vector<Eigen::HouseholderQR<CMat>> qr_;
};

inline CVec explicit_jacobi_step(const JacobiSplit& s, const CVec& v) { return ExplicitJacobi(s).step(v); }

// ---------------------------------------------------------------------------
// Spectral radius

inline double spectral_radius_dense(const CMat& J) {
  if (J.size() == 0) return 0.0;
  Eigen::ComplexEigenSolver<CMat> es(J, false);
  if (es.info() != Eigen::Success) throw NumericalError("spectral radius: eigen solver failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Largest |eigenvalue| of a linear operator by Arnoldi: the Krylov space is
/// grown until the dominant Ritz value is stable to `tol` (exact once the
/// space reaches the full dimension).
inline double spectral_radius_operator(const std::function<CVec(const CVec&)>& apply, Eigen::Index n,
                                       double tol = 1e-8, std::uint64_t seed = 7) {
  if (n == 0) return 0.0;
  Rng rng(seed);
  CVec q = complex_normal_matrix(rng, n, 1, 1.0).col(0);
  q.normalize();
  std::vector<CVec> Q{q};
  CMat Hs = CMat::Zero(n + 1, n);
  double prev = -1.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    CVec w = apply(Q[j]);
    for (int pass = 0; pass < 2; ++pass)  // re-orthogonalize once
      for (Eigen::Index i = 0; i <= j; ++i) {
        const cd h = Q[i].dot(w);
        Hs(i, j) += h;
        w -= h * Q[i];
      }
    const double beta = w.norm();
    Hs(j + 1, j) = beta;
    const CMat Hm = Hs.topLeftCorner(j + 1, j + 1);
    const double rho = spectral_radius_dense(Hm);
    const double scale = std::max(1.0, rho);
    if (beta <= 1e-14 * scale) return rho;  // invariant subspace: exact
    if (j >= 4 && std::abs(rho - prev) <= tol * scale) return rho;
    prev = rho;
    Q.push_back(w / beta);
  }
  throw NumericalError("spectral radius: Arnoldi did not converge");
}

inline double spectral_radius(const JacobiSplit& s) {
  // For the estimation split J = core (x) I, whose spectrum is core's.
  return spectral_radius_dense(s.core);
}

/// Largest |eigenvalue| of the full J applied in operator form.
inline double spectral_radius_operator(const JacobiSplit& s, double tol = 1e-8) {
  return spectral_radius_operator([&s](const CVec& v) { return s.apply(v); }, s.unknowns(), tol);
}

/// Error-norm envelope ||J^n||_2 for n = 0 .. n_max: the error after n steps
/// is at most envelope[n] times the initial error.
inline std::vector<double> predicted_error_decay(const JacobiSplit& s, int n_max) {
  if (n_max < 0) throw ConfigError("predicted_error_decay: negative horizon");
  std::vector<double> env;
  CMat P = CMat::Identity(s.core.rows(), s.core.cols());
  for (int n = 0; n <= n_max; ++n) {
    if (n > 0) P = s.core * P;
    env.push_back(P.size() ? Eigen::JacobiSVD<CMat>(P).singularValues()(0) : 0.0);
  }
  return env;
}

}  // namespace icvec
