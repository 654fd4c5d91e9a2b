// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "icvec/convergence.hpp"
#include "icvec/experiments.hpp"
#include "icvec/scenario.hpp"

namespace icvec {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr const char* kSeedEnv = "ICVEC_SEED";

struct RunContext {
  std::filesystem::path out;
  int threads = 1;
  std::uint64_t seed = 1;
};

struct CommandReport {
  std::vector<std::string> files;
  nlohmann::json checks = nlohmann::json::object();
};

/// --seed beats the environment, which beats the scenario file.
inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const char* env, std::uint64_t file_seed) {
  if (flag) return *flag;
  if (env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used, 10);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string(kSeedEnv) + " must be an unsigned integer");
    }
  }
  return file_seed;
}

namespace detail {

class CsvFile {
 public:
  CsvFile(const std::filesystem::path& dir, const std::string& name, CommandReport& rep) : path_(dir / name) {
    f_.open(path_, std::ios::binary);
    if (!f_) throw std::runtime_error("cannot write " + path_.string());
    rep.files.push_back(name);
  }
  std::ofstream& os() { return f_; }
  CsvFile& row(const char* fmt, ...) __attribute__((format(printf, 2, 3))) {
    char buf[1024];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    f_ << buf << '\n';
    return *this;
  }

 private:
  std::filesystem::path path_;
  std::ofstream f_;
};

inline double to_db20(double a) { return a > 0.0 ? amp_to_db20(a) : -INFINITY; }

}  // namespace detail

inline CommandReport cmd_chanest(const ScenarioFile& s, const RunContext& ctx) {
  CommandReport rep;
  const TrialRunner runner(ctx.threads);
  detail::CsvFile trace(ctx.out, "chanest.csv", rep);
  trace.row("K,snr_db,alpha,iteration,mse_self_db,mse_alien_db,crb_db,crb_alien_db,residual,msgs_sent");
  detail::CsvFile ref(ctx.out, "chanest_reference.csv", rep);
  ref.row("K,snr_db,alpha,scheme,mse_self_db,mse_alien_db");
  std::uint64_t point = 0;
  double worst_gap = 0.0;
  for (int K : s.operator_counts)
    for (double snr : s.snr_db)
      for (double a : s.alpha) {
        ChanestPoint p;
        p.K = K;
        p.N = s.lines_per_operator;
        p.T = s.training_length;
        p.alpha = a;
        p.snr_db = snr;
        p.trials = s.trials;
        p.iterations = s.max_iterations;
        p.orthogonal = s.orthogonal_training;
        p.schedule = s.schedule;
        p.seed = ctx.seed;
        p.point = point++;
        const auto r = run_chanest_point(p, runner);
        for (const auto& row : r.trace.rows)
          trace.row("%d,%.3f,%.6f,%d,%.6f,%.6f,%.6f,%.6f,%.9g,%zu", K, snr, a, row.iteration, row.mse_self_db,
                    row.mse_alien_db, row.crb_db, row.crb_alien_db, row.residual, row.msgs_sent);
        const auto& last = r.trace.rows.back();
        ref.row("%d,%.3f,%.6f,ic,%.6f,%.6f", K, snr, a, last.mse_self_db, last.mse_alien_db);
        ref.row("%d,%.3f,%.6f,centralized,%.6f,%.6f", K, snr, a, r.centralized.self_db(), r.centralized.alien_db());
        ref.row("%d,%.3f,%.6f,dc,%.6f,%.6f", K, snr, a, r.dc.self_db(), r.dc.alien_db());
        ref.row("%d,%.3f,%.6f,no-coop,%.6f,nan", K, snr, a, r.no_coop.self_db());
        for (double g : r.gap_to_mle) worst_gap = std::max(worst_gap, g);
      }
  rep.checks["max_relative_gap_ic_to_centralized"] = worst_gap;
  return rep;
}

inline CommandReport cmd_mud(const ScenarioFile& s, const RunContext& ctx) {
  CommandReport rep;
  const TrialRunner runner(ctx.threads);
  detail::CsvFile out(ctx.out, "mud.csv", rep);
  out.row("K,snr_db,alpha,alpha_db,scheme,iteration,snr_d_median_db,snr_d_mean_db,decision_noise,ser,sigma_n2");
  std::uint64_t point = 0;
  bool ordered = true;
  auto& points = rep.checks["ordering"] = nlohmann::json::array();
  for (int K : s.operator_counts)
    for (double snr : s.snr_db)
      for (double a : s.alpha) {
        MudPoint p;
        p.K = K;
        p.N = s.lines_per_operator;
        p.alpha = a;
        p.snr_db = snr;
        p.trials = s.trials;
        p.iterations = s.max_iterations;
        p.symbols = s.symbols;
        p.modulation = s.constellation;
        p.schemes = s.schemes;
        p.seed = ctx.seed;
        p.point = point++;
        const auto r = run_mud_point(p, runner);
        for (Scheme sc : s.schemes) {
          const auto& curve = r.curves.at(sc);
          for (std::size_t n = 0; n < curve.size(); ++n)
            out.row("%d,%.3f,%.6f,%.3f,%s,%zu,%.6f,%.6f,%.9g,%.6f,%.9g", K, snr, a, detail::to_db20(a), to_string(sc),
                    n, curve[n].snr_d_median_db, curve[n].snr_d_mean_db, curve[n].decision_noise, curve[n].ser,
                    curve[n].sigma_n2);
        }
        auto has = [&](Scheme x) { return r.curves.count(x) > 0; };
        if (has(Scheme::Centralized) && has(Scheme::IcSoft) && has(Scheme::Dc) && has(Scheme::NoCoop)) {
          const double c = r.curves.at(Scheme::Centralized).back().snr_d_median_db;
          const double i = r.curves.at(Scheme::IcSoft).back().snr_d_median_db;
          const double d = r.curves.at(Scheme::Dc).back().snr_d_median_db;
          const double nc = r.curves.at(Scheme::NoCoop).back().snr_d_median_db;
          const bool ok = c >= i - 0.3 && i >= d - 0.3 && d >= nc - 0.3;
          ordered = ordered && ok;
          points.push_back({{"K", K}, {"snr_db", snr}, {"alpha", a}, {"ordered", ok}});
        }
      }
  rep.checks["all_ordered"] = ordered;
  return rep;
}

inline CommandReport cmd_throughput(const ScenarioFile& s, const RunContext& ctx) {
  CommandReport rep;
  const TrialRunner runner(ctx.threads);
  ThroughputSpec spec;
  spec.K = s.operators;
  spec.N = s.lines_per_operator;
  spec.alpha = AlphaProfile(s.alpha_profile);
  spec.snr_db = s.snr_profile;
  spec.snr_const_db = s.snr_db.front();
  spec.bands = s.bands;
  spec.tone_points = s.tone_points;
  spec.trials = s.trials;
  spec.iterations = s.max_iterations;
  spec.symbols = s.symbols;
  spec.modulation = s.constellation;
  spec.gap = s.gap;
  spec.symbol_rate_hz = *s.symbol_rate_hz;
  spec.seed = ctx.seed;
  const auto rows = run_throughput(spec, runner);

  detail::CsvFile out(ctx.out, "throughput.csv", rep);
  out.row("band,tones,centralized_mbps,equal_share_mbps,ic_mbps,dc_mbps,no_coop_mbps");
  bool ordered = true, share_ok = true;
  for (const auto& r : rows) {
    const double c = r.mbps.at(RateScheme::Centralized), e = r.mbps.at(RateScheme::EqualShare),
                 i = r.mbps.at(RateScheme::Ic), d = r.mbps.at(RateScheme::Dc), n = r.mbps.at(RateScheme::NoCoop);
    out.row("%s,%.0f,%.3f,%.3f,%.3f,%.3f,%.3f", r.band.c_str(), r.tones, c, e, i, d, n);
    ordered = ordered && c >= i && i >= d && d >= n;
    if (c > 0.0) share_ok = share_ok && std::abs(e / c - 1.0 / s.operators) <= 0.1 / s.operators;
  }
  rep.checks["ordering_centralized_ic_dc_nc"] = ordered;
  rep.checks["equal_share_within_10pct"] = share_ok;
  return rep;
}

inline CommandReport cmd_convergence(const ScenarioFile& s, const RunContext& ctx) {
  CommandReport rep;
  const TrialRunner runner(ctx.threads);
  const int N = s.lines_per_operator, T = s.training_length;
  for (int K : s.operator_counts)
    if (Eigen::Index(K) * K * N * N > (Eigen::Index{1} << 24))
      throw ConfigError("convergence: K^2 N^2 exceeds the supported size");

  detail::CsvFile rho(ctx.out, "rho.csv", rep);
  rho.row("seed,alpha,K,N,rho_detection,rho_estimation_orthogonal,rho_estimation_random");
  bool det_ok = true, orth_ok = true, rand_ok = true;
  std::uint64_t point = 0;
  for (int K : s.operator_counts)
    for (double a : s.alpha) {
      const std::uint64_t pt = point++;
      struct Rhos {
        double det = 0, est_orth = 0, est_rand = 0;
      };
      const bool orth = T >= K * N;
      const auto rs = runner.map<Rhos>(s.seeds, [&](std::size_t i) {
        const auto id = trial_id(pt, i);
        return Rhos{detection_rho(K, N, a, ctx.seed, id),
                    orth ? estimation_rho(K, N, T, true, ctx.seed, id) : std::nan(""),
                    estimation_rho(K, N, T, false, ctx.seed, id)};
      });
      for (int i = 0; i < s.seeds; ++i) {
        rho.row("%d,%.6f,%d,%d,%.9f,%.9f,%.9f", i, a, K, N, rs[i].det, rs[i].est_orth, rs[i].est_rand);
        det_ok = det_ok && rs[i].det < 1.0;
        orth_ok = orth_ok && (!orth || rs[i].est_orth < 1.0);
        rand_ok = rand_ok && rs[i].est_rand < 1.0;
      }
    }
  rep.checks["all_rho_below_one"] = {
      {"detection", det_ok}, {"estimation_orthogonal", orth_ok}, {"estimation_random", rand_ok}};

  // Estimation equivalence depends on the training only; it is run once per
  // K at the first alpha. Detection equivalence is swept over alpha.
  detail::CsvFile eq(ctx.out, "equivalence.csv", rep);
  eq.row("seed,K,N,alpha,split,max_rel_dev");
  double worst_est = 0.0, worst_det = 0.0;
  for (int K : s.operator_counts)
    for (std::size_t ai = 0; ai < s.alpha.size(); ++ai) {
      const double a = s.alpha[ai];
      const std::uint64_t pt = point++;
      struct Dev {
        double est = 0, det = 0;
      };
      const auto ds = runner.map<Dev>(s.equivalence_seeds, [&](std::size_t i) {
        const auto sd = splitmix64(ctx.seed ^ trial_id(pt, i));
        return Dev{ai == 0 ? estimation_equivalence(K, N, T, a, sd, s.equivalence_iterations) : 0.0,
                   detection_equivalence(K, N, a, sd, s.equivalence_iterations)};
      });
      for (int i = 0; i < s.equivalence_seeds; ++i) {
        if (ai == 0) eq.row("%d,%d,%d,%.6f,estimation,%.3e", i, K, N, a, ds[i].est);
        eq.row("%d,%d,%d,%.6f,detection,%.3e", i, K, N, a, ds[i].det);
        worst_est = std::max(worst_est, ds[i].est);
        worst_det = std::max(worst_det, ds[i].det);
      }
    }
  rep.checks["max_equivalence_deviation"] = {{"estimation", worst_est}, {"detection", worst_det}};

  // Envelope: noisy random-training IC estimation on the Jacobi schedule
  // against ||J^n||, error measured to the centralized solution.
  detail::CsvFile env(ctx.out, "envelope.csv", rep);
  env.row("K,N,T,snr_db,iteration,envelope,measured_ratio");
  bool within = true;
  for (int K : s.operator_counts) {
    ScenarioConfig cfg;
    cfg.num_operators = K;
    cfg.lines_per_operator = N;
    cfg.training_length = T;
    cfg.alpha = s.alpha.front();
    cfg.noise_power = undb10(-s.snr_db.front());
    const auto id = trial_id(point++, 0);
    auto rc = make_stream(ctx.seed, Stream::channel, id);
    auto rt = make_stream(ctx.seed, Stream::training, id);
    auto rn = make_stream(ctx.seed, Stream::noise, id);
    const auto H = synth_channel(cfg, rc);
    const auto X = gen_training(cfg, rt);
    const CMat Y = H.full() * X.stacked() + complex_normal_matrix(rn, cfg.KN(), T, cfg.noise_power);
    const CMat mle = mle_centralized(Y, X).dense();
    const auto split = build_split_estimation(X, nullptr, false);
    const auto bound = predicted_error_decay(split, s.envelope_iterations);
    std::vector<double> err;
    IcEstimationOptions opt;
    opt.rounds = s.envelope_iterations;
    opt.schedule = EstimationSchedule::Jacobi;
    opt.observer = [&](int, std::span<const IcEstimationNode> nodes) {
      std::vector<ChannelEstimate> parts;
      for (const auto& n : nodes) parts.push_back(n.estimate());
      err.push_back((assemble(parts) - mle).norm() / mle.norm());
    };
    run_ic_estimation(Y, X, opt);
    env.row("%d,%d,%d,%.3f,0,%.9e,%.9e", K, N, T, s.snr_db.front(), bound[0], 1.0);
    for (int n = 1; n <= s.envelope_iterations; ++n) {
      env.row("%d,%d,%d,%.3f,%d,%.9e,%.9e", K, N, T, s.snr_db.front(), n, bound[n], err[n - 1]);
      within = within && err[n - 1] <= bound[n] * (1.0 + 1e-9) + 1e-12;
    }
  }
  rep.checks["measured_within_envelope"] = within;
  return rep;
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Run one command on a scenario; writes CSVs plus summary.json. Returns the
/// exit code and prints diagnostics to `err`.
inline int run_command(const std::string& command, const std::string& scenario_path, const std::string& out_dir,
                       int threads, const std::optional<std::uint64_t>& seed_flag, std::ostream& err) {
  try {
    if (threads < 1) throw ConfigError("--threads must be >= 1");
    const ScenarioFile s = load_scenario(scenario_path);
    if (s.experiment != command)
      throw ConfigError("scenario '" + scenario_path + "' is a " + s.experiment + " experiment, not " + command);
    RunContext ctx;
    ctx.out = out_dir;
    ctx.threads = threads;
    ctx.seed = resolve_seed(seed_flag, std::getenv(kSeedEnv), s.seed);
    std::error_code ec;
    std::filesystem::create_directories(ctx.out, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + out_dir + "': " + ec.message());

    const std::string started = utc_now();
    const auto t0 = std::chrono::steady_clock::now();
    CommandReport rep;
    if (command == "chanest") rep = cmd_chanest(s, ctx);
    else if (command == "mud") rep = cmd_mud(s, ctx);
    else if (command == "throughput") rep = cmd_throughput(s, ctx);
    else rep = cmd_convergence(s, ctx);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::json summary{{"command", command},
                           {"scenario", s.name},
                           {"scenario_file", scenario_path},
                           {"seed", ctx.seed},
                           {"threads", threads},
                           {"started_at", started},
                           {"finished_at", utc_now()},
                           {"runtime_s", secs},
                           {"files", rep.files},
                           {"checks", rep.checks}};
    std::ofstream f(ctx.out / "summary.json");
    if (!f) throw std::runtime_error("cannot write summary.json");
    f << summary.dump(2) << '\n';
    return kExitOk;
  } catch (const std::invalid_argument& e) {  // ConfigError, DimensionError
    err << "icvec: invalid scenario: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "icvec: run failed: " << e.what() << '\n';
    return kExitRuntime;
  }
}

inline int run_cli(int argc, char** argv) {
  CLI::App app{"Multi-operator interference-cooperation simulator"};
  app.require_subcommand(1);
  std::string scenario, out;
  int threads = 1;
  std::optional<std::uint64_t> seed;
  for (const char* name : {"chanest", "mud", "throughput", "convergence"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--scenario", scenario, "Scenario JSON file")->required();
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--threads", threads, "Worker threads for Monte-Carlo trials")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Master seed (overrides " + std::string(kSeedEnv) + " and the file)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  return run_command(cmd, scenario, out, threads, seed, std::cerr);
}

}  // namespace icvec
