// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "icvec/config.hpp"
#include "icvec/constellation.hpp"
#include "icvec/rng.hpp"
#include "icvec/types.hpp"

namespace icvec {

/// One operator's private training block X_k (N x T). This is all an
/// interference-cooperation node ever sees of the training.
struct OperatorTraining {
  int op = 0;
  CMat X;
};

/// Training frames of all operators, stacked KN x T.
///
/// Entries are unit-power, so X_k X_k^H ~ T I (not I). Estimators use
/// explicit pseudo-inverses and do not depend on the normalization.
class TrainingSet {
 public:
  TrainingSet() = default;
  TrainingSet(int K, int N, CMat stacked) : K_(K), N_(N), X_(std::move(stacked)) {
    require_dims(X_.rows() == K * N, "training: stacked matrix must have KN rows");
  }

  int K() const { return K_; }
  int N() const { return N_; }
  Eigen::Index T() const { return X_.cols(); }

  OperatorTraining for_operator(int k) const { return {k, X_.middleRows(k * N_, N_)}; }

  /// Full stacked view. Only data-cooperation, the centralized reference
  /// and the simulation harness are entitled to this.
  const CMat& stacked() const { return X_; }

 private:
  int K_ = 0;
  int N_ = 0;
  CMat X_;
};

inline TrainingSet gen_training(const ScenarioConfig& cfg, Rng& rng) {
  if (cfg.training_length <= cfg.lines_per_operator)
    throw ConfigError("training: T must exceed N");
  const Constellation qpsk(Modulation::QPSK);
  CMat X(cfg.KN(), cfg.training_length);
  for (Eigen::Index t = 0; t < X.cols(); ++t)
    for (Eigen::Index r = 0; r < X.rows(); ++r) X(r, t) = qpsk.draw(rng);
  return {cfg.K(), cfg.N(), std::move(X)};
}

/// Replace the stacked rows by an exactly orthogonal set spanning the same
/// row space, each row with squared norm T: X' X'^H = T I.
///
/// Thin QR of X^H with the R diagonal rotated onto the positive reals, so an
/// already-orthogonal set maps to itself.
inline TrainingSet orthogonalize(const TrainingSet& s) {
  const Eigen::Index KN = s.stacked().rows(), T = s.T();
  if (T < KN) throw ConfigError("orthogonalize: needs T >= KN");
  Eigen::HouseholderQR<CMat> qr(s.stacked().adjoint());
  CMat Q = qr.householderQ() * CMat::Identity(T, KN);
  const CMat R = qr.matrixQR().topRows(KN).triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < KN; ++i) {
    const double mag = std::abs(R(i, i));
    if (mag < 1e-12 * std::sqrt(double(T))) throw NumericalError("orthogonalize: training rows are linearly dependent");
    Q.col(i) *= R(i, i) / mag;
  }
  return {s.K(), s.N(), std::sqrt(double(T)) * Q.adjoint()};
}

struct CorrelationSummary {
  double max_offdiag = 0.0;       // over all pairs of rows, |[X X^H / T]_pq|
  double mean_offdiag = 0.0;
  double max_cross_operator = 0.0;  // restricted to rows of different operators
};

inline CorrelationSummary crosscorr_report(const TrainingSet& s) {
  const CMat G = s.stacked() * s.stacked().adjoint() / double(s.T());
  CorrelationSummary out;
  double sum = 0.0;
  long count = 0;
  for (Eigen::Index p = 0; p < G.rows(); ++p)
    for (Eigen::Index q = 0; q < G.cols(); ++q) {
      if (p == q) continue;
      const double v = std::abs(G(p, q));
      out.max_offdiag = std::max(out.max_offdiag, v);
      sum += v;
      ++count;
      if (p / s.N() != q / s.N()) out.max_cross_operator = std::max(out.max_cross_operator, v);
    }
  out.mean_offdiag = count ? sum / count : 0.0;
  return out;
}

/// CSV fixture format: one row per line of the stacked matrix,
/// `operator,line,re_0,im_0,...,re_{T-1},im_{T-1}`, 17 significant digits.
inline void write_training_csv(std::ostream& os, const TrainingSet& s) {
  os << "operator,line";
  for (Eigen::Index t = 0; t < s.T(); ++t) os << ",re_" << t << ",im_" << t;
  os << '\n';
  char buf[64];
  for (Eigen::Index r = 0; r < s.stacked().rows(); ++r) {
    os << r / s.N() << ',' << r % s.N();
    for (Eigen::Index t = 0; t < s.T(); ++t) {
      const cd v = s.stacked()(r, t);
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g", v.real(), v.imag());
      os << buf;
    }
    os << '\n';
  }
}

inline TrainingSet read_training_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("training csv: missing header");
  std::vector<std::vector<cd>> rows;
  std::vector<int> ops, lines;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() < 4 || (vals.size() - 2) % 2 != 0) throw ConfigError("training csv: malformed row");
    ops.push_back(static_cast<int>(vals[0]));
    lines.push_back(static_cast<int>(vals[1]));
    std::vector<cd> r;
    for (std::size_t i = 2; i < vals.size(); i += 2) r.emplace_back(vals[i], vals[i + 1]);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ConfigError("training csv: no rows");
  const int K = ops.back() + 1;
  const int N = static_cast<int>(rows.size()) / K;
  if (K * N != static_cast<int>(rows.size())) throw ConfigError("training csv: ragged operator blocks");
  CMat X(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (ops[r] != static_cast<int>(r) / N || lines[r] != static_cast<int>(r) % N)
      throw ConfigError("training csv: rows out of order");
    if (rows[r].size() != rows.front().size()) throw ConfigError("training csv: ragged rows");
    for (std::size_t t = 0; t < rows[r].size(); ++t) X(r, t) = rows[r][t];
  }
  return {K, N, std::move(X)};
}

}  // namespace icvec
