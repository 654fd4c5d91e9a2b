// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <algorithm>

#include "icvec/constellation.hpp"
#include "icvec/soft_detector.hpp"
#include "icvec/types.hpp"

namespace icvec {

/// Thin QR of a tall channel, optionally augmented with sqrt(reg) I rows
/// (MMSE metric). Layers are detected from the last column to the first.
class DfeFactorization {
 public:
  DfeFactorization() = default;
  explicit DfeFactorization(const CMat& H, double reg = 0.0) : rows_(H.rows()), reg_(reg) {
    const Eigen::Index n = H.cols();
    if (H.rows() < n) throw DimensionError("dfe: channel must be tall (rows >= cols)");
    if (reg < 0.0) throw ConfigError("dfe: negative regularization");
    CMat A(reg > 0.0 ? H.rows() + n : H.rows(), n);
    A.topRows(H.rows()) = H;
    if (reg > 0.0) A.bottomRows(n) = std::sqrt(reg) * CMat::Identity(n, n);
    Eigen::HouseholderQR<CMat> qr(A);
    Q_ = qr.householderQ() * CMat::Identity(A.rows(), n);
    R_ = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    const double scale = std::max(A.norm(), 1e-300);
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(R_(i, i)) <= 1e-12 * scale) throw NumericalError("dfe: channel is rank deficient");
  }

  Eigen::Index layers() const { return R_.cols(); }
  double regularization() const { return reg_; }
  /// Orthonormal factor of the (augmented) channel.
  const CMat& Q() const { return Q_; }
  const CMat& R() const { return R_; }
  cd r(Eigen::Index i, Eigen::Index j) const { return R_(i, j); }

  /// Feed-forward filter: Q_top^H z, Q_top the rows facing the observation.
  CMat project(const CMat& z) const {
    require_dims(z.rows() == rows_, "dfe: observation length mismatch");
    return Q_.topRows(rows_).adjoint() * z;
  }

 private:
  Eigen::Index rows_ = 0;
  double reg_ = 0.0;
  CMat Q_;
  CMat R_;
};

enum class Decision {
  Soft,    // posterior mean g_Lambda
  Hard,    // nearest symbol
  Linear,  // identity (no slicing); with reg = 0 this is plain least squares
};

struct DfeOutput {
  CMat decided;  // fed-back decisions
  CMat pre;      // decision variables before g_Lambda / slicing
  RMat layer_variance;  // noise variance assumed at each decision
};

/// Back-substitution with per-layer decisions. `noise_var` is the noise
/// power in the observation; layer i sees noise_var / |r_ii|^2.
inline DfeOutput dfe_detect(const DfeFactorization& f, const CMat& z, double noise_var, Decision mode,
                            const Constellation& c) {
  const Eigen::Index n = f.layers(), L = z.cols();
  const CMat zt = f.project(z);
  const SoftDetector g(c);
  const double v = std::max(noise_var, 1e-300);
  DfeOutput out{CMat(n, L), CMat(n, L), RMat(n, L)};
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      cd acc = zt(i, l);
      for (Eigen::Index j = i + 1; j < n; ++j) acc -= f.r(i, j) * out.decided(j, l);
      const cd u = acc / f.r(i, i);
      const double var = v / std::norm(f.r(i, i));
      out.pre(i, l) = u;
      out.layer_variance(i, l) = var;
      switch (mode) {
        case Decision::Soft: out.decided(i, l) = g.estimate(u, var); break;
        case Decision::Hard: out.decided(i, l) = g.hard(u); break;
        case Decision::Linear: out.decided(i, l) = u; break;
      }
    }
  return out;
}

}  // namespace icvec
