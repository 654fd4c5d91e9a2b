// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "icvec/types.hpp"

namespace icvec {

/// Least-squares right division Z X^+ for a wide full-row-rank X, through a
/// QR factorization of X^H (the Gram matrix X X^H is never formed).
class RightSolver {
 public:
  RightSolver() = default;
  explicit RightSolver(const CMat& X) : rows_(X.rows()), cols_(X.cols()), qr_(X.adjoint()) {
    if (X.rows() > X.cols()) throw NumericalError("least squares: more unknowns than observations");
    qr_.setThreshold(1e-12);
    if (qr_.rank() < X.rows()) throw NumericalError("least squares: training matrix is rank deficient");
  }

  /// argmin_H ||Z - H X||_F.
  CMat solve(const CMat& Z) const {
    require_dims(Z.cols() == cols_, "least squares: observation length mismatch");
    return qr_.solve(Z.adjoint()).adjoint();
  }

  Eigen::Index rows() const { return rows_; }

 private:
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  Eigen::ColPivHouseholderQR<CMat> qr_;
};

inline double condition_number(const CMat& A) {
  Eigen::JacobiSVD<CMat> svd(A);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 0.0;
  const double lo = s(s.size() - 1);
  return lo > 0.0 ? s(0) / lo : INFINITY;
}

}  // namespace icvec
