// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "icvec/rng.hpp"
#include "icvec/types.hpp"

namespace icvec {

enum class Modulation { BPSK, QPSK, QAM16, QAM64, QAM256, QAM4096 };

inline std::string_view to_string(Modulation m) {
  switch (m) {
    case Modulation::BPSK: return "BPSK";
    case Modulation::QPSK: return "QPSK";
    case Modulation::QAM16: return "QAM16";
    case Modulation::QAM64: return "QAM64";
    case Modulation::QAM256: return "QAM256";
    case Modulation::QAM4096: return "QAM4096";
  }
  return "?";
}

inline Modulation parse_modulation(std::string_view s) {
  for (auto m : {Modulation::BPSK, Modulation::QPSK, Modulation::QAM16, Modulation::QAM64,
                 Modulation::QAM256, Modulation::QAM4096})
    if (std::ranges::equal(s, to_string(m), [](char a, char b) {
          return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
        }))
      return m;
  throw ConfigError("unknown constellation '" + std::string(s) + "'");
}

/// Separable rectangular alphabet with unit average symbol power.
///
/// Complex symbols are real_levels x imag_levels. BPSK has the single
/// imaginary level {0}; every other supported size is a square QAM.
class Constellation {
 public:
  explicit Constellation(Modulation m) : mod_(m) {
    if (m == Modulation::BPSK) {
      real_ = {-1.0, 1.0};
      imag_ = {0.0};
      return;
    }
    const int side = [m] {
      switch (m) {
        case Modulation::QPSK: return 2;
        case Modulation::QAM16: return 4;
        case Modulation::QAM64: return 8;
        case Modulation::QAM256: return 16;
        case Modulation::QAM4096: return 64;
        default: return 0;
      }
    }();
    const int M = side * side;
    // Levels +-1, +-3, ... scaled so that E|x|^2 = 1 over the square grid.
    const double scale = 1.0 / std::sqrt(2.0 * (M - 1) / 3.0);
    for (int i = 0; i < side; ++i) real_.push_back((2 * i - side + 1) * scale);
    imag_ = real_;
  }

  Modulation modulation() const { return mod_; }
  std::size_t size() const { return real_.size() * imag_.size(); }
  int bits_per_symbol() const { return static_cast<int>(std::lround(std::log2(double(size())))); }

  const std::vector<double>& real_levels() const { return real_; }
  const std::vector<double>& imag_levels() const { return imag_; }

  double max_component() const { return real_.back(); }

  std::vector<cd> points() const {
    std::vector<cd> pts;
    pts.reserve(size());
    for (double re : real_)
      for (double im : imag_) pts.emplace_back(re, im);
    return pts;
  }

  bool contains(cd s, double tol = 1e-12) const {
    auto near = [tol](const std::vector<double>& lv, double v) {
      return std::any_of(lv.begin(), lv.end(), [&](double a) { return std::abs(a - v) <= tol; });
    };
    return near(real_, s.real()) && near(imag_, s.imag());
  }

  cd draw(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> re(0, real_.size() - 1);
    std::uniform_int_distribution<std::size_t> im(0, imag_.size() - 1);
    const double r = real_[re(rng)];
    const double i = imag_[im(rng)];
    return {r, i};
  }

  /// Nearest component level. Equidistant ties go to the smaller magnitude,
  /// then to the larger value.
  static double slice_component(double y, const std::vector<double>& levels) {
    double best = levels.front();
    double best_d = std::abs(y - best);
    for (double a : levels) {
      const double d = std::abs(y - a);
      if (d < best_d) {
        best = a;
        best_d = d;
      } else if (d == best_d) {
        if (std::abs(a) < std::abs(best) || (std::abs(a) == std::abs(best) && a > best)) best = a;
      }
    }
    return best;
  }

  cd slice(cd y) const { return {slice_component(y.real(), real_), slice_component(y.imag(), imag_)}; }

 private:
  Modulation mod_;
  std::vector<double> real_;
  std::vector<double> imag_;
};

}  // namespace icvec
