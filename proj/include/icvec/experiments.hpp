// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <map>
#include <optional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "icvec/channel.hpp"
#include "icvec/config.hpp"
#include "icvec/convergence.hpp"
#include "icvec/detection.hpp"
#include "icvec/estimation.hpp"
#include "icvec/metrics.hpp"
#include "icvec/rng.hpp"
#include "icvec/signal.hpp"
#include "icvec/training.hpp"

namespace icvec {

/// Runs independent trials on a fixed number of threads. Results are stored
/// by trial index, so the output never depends on the thread count.
class TrialRunner {
 public:
  explicit TrialRunner(int threads = 1) : threads_(std::max(1, threads)) {}
  int threads() const { return threads_; }

  template <class R, class F>
  std::vector<R> map(std::size_t n, F&& f) const {
    std::vector<R> out(n);
    if (threads_ == 1 || n < 2) {
      for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
      return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex mu;
    auto work = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          out[i] = f(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    };
    std::vector<std::thread> pool;
    const int t = static_cast<int>(std::min<std::size_t>(threads_, n));
    for (int i = 0; i < t; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
    return out;
  }

 private:
  int threads_;
};

/// Trial identifier mixing a sweep-point index and the trial number.
inline std::uint64_t trial_id(std::uint64_t point, std::uint64_t trial) { return (point << 32) ^ trial; }

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + m, v.end());
  if (v.size() % 2) return v[m];
  const double hi = v[m];
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + m));
}

inline double noise_from_snr_db(double snr_db) { return undb10(-snr_db); }

// ---------------------------------------------------------------------------
// Channel estimation

struct ChanestPoint {
  int K = 2;
  int N = 10;
  int T = 128;
  double alpha = 0.5;
  double snr_db = 15.0;
  int trials = 100;
  int iterations = 10;
  bool orthogonal = true;
  EstimationSchedule schedule = EstimationSchedule::Literal;
  std::uint64_t seed = 1;
  std::uint64_t point = 0;
};

struct ChanestResult {
  EstimationTrace trace;    // IC, averaged over trials
  MseAccumulator centralized;
  MseAccumulator dc;
  MseAccumulator no_coop;
  double crb_self_db = 0.0;
  double crb_alien_db = 0.0;
  /// Per-trial relative Frobenius distance of the final IC estimate to the
  /// centralized one.
  std::vector<double> gap_to_mle;
};

struct ChanestTrial {
  EstimationTrialCurve curve;
  MseAccumulator centralized, dc, no_coop;
  NormalizedCrb crb;
  double gap_to_mle = 0.0;
};

inline ChanestTrial chanest_trial(const ChanestPoint& p, std::uint64_t t) {
  ScenarioConfig cfg;
  cfg.num_operators = p.K;
  cfg.lines_per_operator = p.N;
  cfg.training_length = p.T;
  cfg.alpha = p.alpha;
  cfg.noise_power = noise_from_snr_db(p.snr_db);
  cfg.max_iterations = p.iterations;
  cfg.validate();
  const auto id = trial_id(p.point, t);
  auto rc = make_stream(p.seed, Stream::channel, id);
  auto rt = make_stream(p.seed, Stream::training, id);
  auto rn = make_stream(p.seed, Stream::noise, id);
  const auto H = synth_channel(cfg, rc);
  TrainingSet X = gen_training(cfg, rt);
  if (p.orthogonal) X = orthogonalize(X);
  const CMat Y = H.full() * X.stacked() + complex_normal_matrix(rn, cfg.KN(), cfg.training_length, cfg.noise_power);

  ChanestTrial out;
  IcEstimationOptions opt;
  opt.rounds = p.iterations;
  opt.schedule = p.schedule;
  CMat final_ic;
  opt.observer = [&](int r, std::span<const IcEstimationNode> nodes) {
    if (r != p.iterations) return;
    std::vector<ChannelEstimate> parts;
    for (const auto& n : nodes) parts.push_back(n.estimate());
    final_ic = assemble(parts);
  };
  out.curve = ic_estimation_curve(H, X, Y, p.alpha, opt);
  const auto mle = mle_centralized(Y, X);
  out.centralized = normalized_mse(mle, H, p.alpha);
  for (int k = 0; k < p.K; ++k) {
    out.dc += normalized_mse(dc_estimate(k, Y.middleRows(k * p.N, p.N), X), H, p.alpha);
    out.no_coop += normalized_mse(no_coop_estimate(k, p.K, Y.middleRows(k * p.N, p.N), X.for_operator(k)), H, p.alpha);
  }
  out.crb = normalized_crb(cfg.noise_power, X, p.alpha);
  out.gap_to_mle = (final_ic - mle.dense()).norm() / mle.dense().norm();
  return out;
}

inline ChanestResult run_chanest_point(const ChanestPoint& p, const TrialRunner& runner) {
  if (p.trials < 1) throw ConfigError("chanest: trials must be >= 1");
  const auto trials = runner.map<ChanestTrial>(p.trials, [&](std::size_t t) { return chanest_trial(p, t); });
  ChanestResult res;
  double crb_self = 0.0, crb_alien = 0.0;
  for (const auto& tr : trials) {
    res.centralized += tr.centralized;
    res.dc += tr.dc;
    res.no_coop += tr.no_coop;
    crb_self += tr.crb.self_linear;
    crb_alien += tr.crb.alien_linear;
    res.gap_to_mle.push_back(tr.gap_to_mle);
  }
  const NormalizedCrb crb{crb_self / p.trials, crb_alien / p.trials};
  res.crb_self_db = crb.self_db();
  res.crb_alien_db = crb.alien_db();
  for (int n = 0; n < p.iterations; ++n) {
    MseAccumulator acc;
    double resid = 0.0;
    for (const auto& tr : trials) {
      acc += tr.curve.mse[n];
      resid += tr.curve.residual[n];
    }
    res.trace.rows.push_back({n + 1, acc.self_db(), acc.alien_db(), res.crb_self_db, res.crb_alien_db,
                              resid / p.trials, trials[0].curve.msgs[n]});
  }
  return res;
}

// ---------------------------------------------------------------------------
// Multi-user detection

enum class Scheme { Centralized, CentralizedDfe, IcSoft, IcHard, Dc, NoCoop };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::Centralized: return "centralized";
    case Scheme::CentralizedDfe: return "centralized-dfe";
    case Scheme::IcSoft: return "ic-soft";
    case Scheme::IcHard: return "ic-hard";
    case Scheme::Dc: return "dc";
    case Scheme::NoCoop: return "no-coop";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& s) {
  for (auto x : {Scheme::Centralized, Scheme::CentralizedDfe, Scheme::IcSoft, Scheme::IcHard, Scheme::Dc,
                 Scheme::NoCoop})
    if (s == to_string(x)) return x;
  throw ConfigError("unknown scheme '" + s + "'");
}

inline const std::vector<Scheme>& all_schemes() {
  static const std::vector<Scheme> v{Scheme::Centralized, Scheme::CentralizedDfe, Scheme::IcSoft,
                                     Scheme::IcHard,      Scheme::Dc,             Scheme::NoCoop};
  return v;
}

struct MudPoint {
  int K = 2;
  int N = 10;
  double alpha = 0.5;
  double snr_db = 15.0;
  int trials = 50;
  int iterations = 6;
  int symbols = 1;  // L symbol times per channel draw
  Modulation modulation = Modulation::QPSK;
  std::vector<Scheme> schemes = all_schemes();
  std::uint64_t seed = 1;
  std::uint64_t point = 0;
};

/// Per-scheme decision variables after 0..iterations rounds.
struct MudTrial {
  std::map<Scheme, std::vector<double>> snr_db;     // per iteration
  std::map<Scheme, std::vector<double>> err_power;  // sum |u - x|^2 per iteration
  std::map<Scheme, std::vector<double>> ser;
  std::map<Scheme, std::vector<double>> sigma_n2;
  double sig_power = 0.0;  // sum |x|^2
  std::size_t count = 0;
};

inline MudTrial mud_trial(const MudPoint& p, std::uint64_t t) {
  ScenarioConfig cfg;
  cfg.num_operators = p.K;
  cfg.lines_per_operator = p.N;
  cfg.training_length = p.N + 1;
  cfg.alpha = p.alpha;
  cfg.noise_power = noise_from_snr_db(p.snr_db);
  cfg.constellation = p.modulation;
  cfg.validate();
  const auto id = trial_id(p.point, t);
  auto rc = make_stream(p.seed, Stream::channel, id);
  auto rs = make_stream(p.seed, Stream::symbols, id);
  auto rn = make_stream(p.seed, Stream::noise, id);
  const auto H = synth_channel(cfg, rc);
  const auto x = draw_symbols(cfg, p.symbols, rs);
  const auto y = transmit(H, x, cfg.noise_power, rn);
  const Constellation c(p.modulation);
  const double s2 = cfg.noise_power;
  const int K = p.K, N = p.N;

  MudTrial out;
  out.sig_power = x.x.squaredNorm();
  out.count = static_cast<std::size_t>(x.x.size());
  auto score = [&](Scheme s, const std::vector<CMat>& hist, const std::vector<double>& sig) {
    for (int n = 0; n <= p.iterations; ++n) {
      const CMat& u = hist[std::min<std::size_t>(n, hist.size() - 1)];
      const CMat sliced = u.unaryExpr([&c](cd v) { return c.slice(v); });
      out.snr_db[s].push_back(snr_decision(u, x.x));
      out.err_power[s].push_back((u - x.x).squaredNorm());
      out.ser[s].push_back(symbol_error_rate(sliced, x.x));
      out.sigma_n2[s].push_back(sig.empty() ? s2 : sig[std::min<std::size_t>(n, sig.size() - 1)]);
    }
  };
  MudNodeOptions o;
  o.sigma2 = s2;
  o.init_noise = interference_plus_noise(N, K, p.alpha, s2);
  for (Scheme s : p.schemes) {
    switch (s) {
      case Scheme::Centralized: {
        std::vector<CMat> hist;
        centralized_pic(y.y, H.full(), s2, c, p.iterations, &hist);
        score(s, hist, {});
        break;
      }
      case Scheme::CentralizedDfe:
        score(s, {mmse_centralized(y.y, H.full(), s2, c).pre}, {});
        break;
      case Scheme::IcSoft:
      case Scheme::IcHard: {
        MudNodeOptions oi = o;
        oi.decision = s == Scheme::IcSoft ? Decision::Soft : Decision::Hard;
        const auto run = run_ic_mud(H, y.y, c, p.iterations, oi);
        score(s, run.pre_history, run.sigma_history);
        break;
      }
      case Scheme::Dc: {
        const auto run = run_dc_mud(H, y.y, c, p.iterations, o);
        score(s, run.pre_history, run.sigma_history);
        break;
      }
      case Scheme::NoCoop: {
        CMat u(K * N, p.symbols);
        for (int k = 0; k < K; ++k)
          u.middleRows(k * N, N) = no_coop_mud(y.of(k), H.block(k, k), p.alpha, K, N, s2, c).pre;
        score(s, {u}, {o.init_noise});
        break;
      }
    }
  }
  return out;
}

struct MudCurvePoint {
  double snr_d_median_db = 0.0;
  double snr_d_mean_db = 0.0;      // 10 log10 of total signal / total error power
  double decision_noise = 0.0;     // mean |u - x|^2
  double ser = 0.0;
  double sigma_n2 = 0.0;
};

struct MudResult {
  std::map<Scheme, std::vector<MudCurvePoint>> curves;  // index = iteration 0..n
};

inline MudResult run_mud_point(const MudPoint& p, const TrialRunner& runner) {
  if (p.trials < 1) throw ConfigError("mud: trials must be >= 1");
  const auto trials = runner.map<MudTrial>(p.trials, [&](std::size_t t) { return mud_trial(p, t); });
  MudResult res;
  double sig = 0.0;
  std::size_t cnt = 0;
  for (const auto& tr : trials) {
    sig += tr.sig_power;
    cnt += tr.count;
  }
  for (Scheme s : p.schemes) {
    auto& curve = res.curves[s];
    for (int n = 0; n <= p.iterations; ++n) {
      std::vector<double> snrs;
      double err = 0.0, ser = 0.0, sn = 0.0;
      for (const auto& tr : trials) {
        snrs.push_back(tr.snr_db.at(s)[n]);
        err += tr.err_power.at(s)[n];
        ser += tr.ser.at(s)[n];
        sn += tr.sigma_n2.at(s)[n];
      }
      MudCurvePoint cp;
      cp.snr_d_median_db = median(snrs);
      cp.snr_d_mean_db = err > 0.0 ? std::min(kSnrCapDb, db10(sig / err)) : kSnrCapDb;
      cp.decision_noise = err / double(cnt);
      cp.ser = ser / p.trials;
      cp.sigma_n2 = sn / p.trials;
      curve.push_back(cp);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Throughput

struct Band {
  std::string name;
  double f_lo_mhz = 0.0;
  double f_hi_mhz = 0.0;
};

struct ThroughputSpec {
  int K = 2;
  int N = 10;
  AlphaProfile alpha;                                 // alpha(f) in dB
  std::vector<std::pair<double, double>> snr_db;      // SNR(f) knots; empty = constant
  double snr_const_db = 15.0;
  std::vector<Band> bands;
  int tone_points = 8;  // frequency samples per band
  int trials = 10;
  int iterations = 6;
  int symbols = 1;
  Modulation modulation = Modulation::QPSK;
  GapModel gap;
  double symbol_rate_hz = 4000.0;
  std::uint64_t seed = 1;
};

enum class RateScheme { Centralized, EqualShare, Ic, Dc, NoCoop };

inline const char* to_string(RateScheme s) {
  switch (s) {
    case RateScheme::Centralized: return "centralized";
    case RateScheme::EqualShare: return "equal-share";
    case RateScheme::Ic: return "ic";
    case RateScheme::Dc: return "dc";
    case RateScheme::NoCoop: return "no-coop";
  }
  return "?";
}

inline const std::vector<RateScheme>& all_rate_schemes() {
  static const std::vector<RateScheme> v{RateScheme::Centralized, RateScheme::EqualShare, RateScheme::Ic,
                                         RateScheme::Dc, RateScheme::NoCoop};
  return v;
}

struct ThroughputRow {
  std::string band;
  std::map<RateScheme, double> mbps;  // per line
  double tones = 0.0;
};

/// Mean loaded bits per line at one frequency, per scheme.
inline std::map<RateScheme, double> bits_at_frequency(const ThroughputSpec& s, double f_mhz, std::uint64_t point,
                                                      const TrialRunner& runner) {
  MudPoint p;
  p.K = s.K;
  p.N = s.N;
  p.alpha = s.alpha.alpha(f_mhz);
  p.snr_db = s.snr_db.empty() ? s.snr_const_db : AlphaProfile::interpolate(s.snr_db, f_mhz);
  p.trials = s.trials;
  p.iterations = s.iterations;
  p.symbols = s.symbols;
  p.modulation = s.modulation;
  p.schemes = {Scheme::Centralized, Scheme::IcSoft, Scheme::Dc, Scheme::NoCoop};
  p.seed = s.seed;
  p.point = point;
  const double s2 = noise_from_snr_db(p.snr_db);

  struct Bits {
    std::map<RateScheme, double> b;
  };
  const auto per = runner.map<Bits>(p.trials, [&](std::size_t t) {
    const auto tr = mud_trial(p, t);
    Bits out;
    out.b[RateScheme::Centralized] = bit_loading(tr.snr_db.at(Scheme::Centralized).back(), s.gap);
    out.b[RateScheme::Ic] = bit_loading(tr.snr_db.at(Scheme::IcSoft).back(), s.gap);
    out.b[RateScheme::Dc] = bit_loading(tr.snr_db.at(Scheme::Dc).back(), s.gap);
    out.b[RateScheme::NoCoop] = bit_loading(tr.snr_db.at(Scheme::NoCoop).back(), s.gap);
    // Equal share: each operator alone on 1/K of the tones, so only its own
    // self block and noise, jointly detected within the operator.
    ScenarioConfig cfg;
    cfg.num_operators = s.K;
    cfg.lines_per_operator = s.N;
    cfg.training_length = s.N + 1;
    cfg.alpha = p.alpha;
    cfg.noise_power = s2;
    cfg.constellation = s.modulation;
    const auto id = trial_id(point, t);
    auto rc = make_stream(s.seed, Stream::channel, id);
    auto rs = make_stream(s.seed, Stream::symbols, id);
    auto rn = make_stream(s.seed, Stream::aux, id);
    const auto H = synth_channel(cfg, rc);
    const auto x = draw_symbols(cfg, s.symbols, rs);
    const Constellation c(s.modulation);
    double share = 0.0;
    for (int k = 0; k < s.K; ++k) {
      const CMat Hkk = H.block(k, k);
      const CMat xk = x.of(k);
      const CMat yk = Hkk * xk + complex_normal_matrix(rn, s.N, s.symbols, s2);
      const auto r = centralized_pic(yk, Hkk, s2, c, s.iterations);
      share += bit_loading(snr_decision(r.pre, xk), s.gap);
    }
    out.b[RateScheme::EqualShare] = share / s.K / s.K;
    return out;
  });
  std::map<RateScheme, double> mean;
  for (const auto& b : per)
    for (const auto& [k, v] : b.b) mean[k] += v / double(per.size());
  return mean;
}

inline std::vector<ThroughputRow> run_throughput(const ThroughputSpec& s, const TrialRunner& runner) {
  s.gap.validate();
  if (s.tone_points < 1) throw ConfigError("throughput: tone_points must be >= 1");
  if (s.alpha.empty()) throw ConfigError("throughput: missing alpha profile");
  std::vector<ThroughputRow> rows;
  std::uint64_t point = 0;
  for (const auto& band : s.bands) {
    ThroughputRow row;
    row.band = band.name;
    const double width_hz = std::max(0.0, (band.f_hi_mhz - band.f_lo_mhz) * 1e6);
    row.tones = std::floor(width_hz / s.gap.tone_spacing_hz);
    for (auto rs : all_rate_schemes()) row.mbps[rs] = 0.0;
    if (row.tones > 0.0) {
      const double per_point = row.tones / s.tone_points;
      for (int g = 0; g < s.tone_points; ++g) {
        const double f = band.f_lo_mhz + (g + 0.5) * (band.f_hi_mhz - band.f_lo_mhz) / s.tone_points;
        const auto bits = bits_at_frequency(s, f, point++, runner);
        for (const auto& [k, b] : bits) {
          const double tone_bits[1] = {b * per_point};
          row.mbps[k] += throughput_mbps(tone_bits, s.gap, s.symbol_rate_hz);
        }
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Convergence checks

/// Max per-iteration relative deviation between IC estimation (Jacobi
/// schedule, noiseless) and the explicit recursion D h' = F h + b from h = 0.
inline double estimation_equivalence(int K, int N, int T, double alpha, std::uint64_t seed, int iterations,
                                     bool orthogonal = false) {
  ScenarioConfig cfg;
  cfg.num_operators = K;
  cfg.lines_per_operator = N;
  cfg.training_length = T;
  cfg.alpha = alpha;
  auto rc = make_stream(seed, Stream::channel, 0);
  auto rt = make_stream(seed, Stream::training, 0);
  const auto H = synth_channel(cfg, rc);
  TrainingSet X = gen_training(cfg, rt);
  if (orthogonal) X = orthogonalize(X);
  const CMat Y = H.full() * X.stacked();
  const auto split = build_split_estimation(X, &Y);

  std::vector<CVec> states;
  IcEstimationOptions opt;
  opt.rounds = iterations;
  opt.schedule = EstimationSchedule::Jacobi;
  opt.observer = [&](int, std::span<const IcEstimationNode> nodes) {
    std::vector<ChannelEstimate> parts;
    for (const auto& n : nodes) parts.push_back(n.estimate());
    const CMat full = assemble(parts);
    states.emplace_back(Eigen::Map<const CVec>(full.data(), full.size()));
  };
  run_ic_estimation(Y, X, opt);

  std::optional<ExplicitJacobi> exp;
  if (split.D) exp.emplace(split);
  CVec v = CVec::Zero(split.unknowns());
  double worst = 0.0;
  for (int n = 0; n < iterations; ++n) {
    v = exp ? exp->step(v) : split.step(v);
    worst = std::max(worst, (states[n] - v).norm() / std::max(v.norm(), 1e-300));
  }
  return worst;
}

/// Same for IC-MUD in linear mode against x' = J x + c from the local
/// initial pass.
inline double detection_equivalence(int K, int N, double alpha, std::uint64_t seed, int iterations,
                                    double snr_db = 15.0) {
  ScenarioConfig cfg;
  cfg.num_operators = K;
  cfg.lines_per_operator = N;
  cfg.training_length = N + 1;
  cfg.alpha = alpha;
  cfg.noise_power = noise_from_snr_db(snr_db);
  auto rc = make_stream(seed, Stream::channel, 0);
  auto rs = make_stream(seed, Stream::symbols, 0);
  auto rn = make_stream(seed, Stream::noise, 0);
  const auto H = synth_channel(cfg, rc);
  const auto x = draw_symbols(cfg, 1, rs);
  const auto y = transmit(H, x, cfg.noise_power, rn);
  const CVec yv = y.y.col(0);
  const auto split = build_split_detection(H, &yv);

  MudNodeOptions o;
  o.sigma2 = cfg.noise_power;
  o = linear_mode(o);
  const Constellation c(cfg.constellation);
  const auto run = run_ic_mud(H, y.y, c, iterations, o);
  const ExplicitJacobi exp(split);
  CVec v = run.decided_history[0].col(0);
  double worst = 0.0;
  for (int n = 1; n <= iterations; ++n) {
    v = exp.step(v);
    worst = std::max(worst, (run.decided_history[n].col(0) - v).norm() / std::max(v.norm(), 1e-300));
  }
  return worst;
}

inline double detection_rho(int K, int N, double alpha, std::uint64_t seed, std::uint64_t trial) {
  ScenarioConfig cfg;
  cfg.num_operators = K;
  cfg.lines_per_operator = N;
  cfg.training_length = N + 1;
  cfg.alpha = alpha;
  auto rc = make_stream(seed, Stream::channel, trial);
  return spectral_radius(build_split_detection(synth_channel(cfg, rc)));
}

inline double estimation_rho(int K, int N, int T, bool orthogonal, std::uint64_t seed, std::uint64_t trial) {
  ScenarioConfig cfg;
  cfg.num_operators = K;
  cfg.lines_per_operator = N;
  cfg.training_length = T;
  auto rt = make_stream(seed, Stream::training, trial);
  TrainingSet X = gen_training(cfg, rt);
  if (orthogonal) X = orthogonalize(X);
  return spectral_radius(build_split_estimation(X, nullptr, false));
}

}  // namespace icvec
