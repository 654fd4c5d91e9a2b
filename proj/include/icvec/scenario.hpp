// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "icvec/config.hpp"
#include "icvec/constellation.hpp"
#include "icvec/estimation.hpp"
#include "icvec/experiments.hpp"
#include "icvec/metrics.hpp"

namespace icvec {

/// Parsed and validated scenario document. See README for the schema.
struct ScenarioFile {
  std::string name;
  std::string experiment;  // chanest | mud | throughput | convergence
  std::uint64_t seed = 1;

  // system
  int operators = 2;
  int lines_per_operator = 10;
  int training_length = 128;
  Modulation constellation = Modulation::QPSK;
  int max_iterations = 10;

  // sweep
  std::vector<double> alpha;  // linear amplitudes
  std::vector<double> snr_db{15.0};
  std::vector<int> operator_counts;  // defaults to {operators}
  int trials = 10;
  int symbols = 1;

  // estimation
  bool orthogonal_training = false;
  EstimationSchedule schedule = EstimationSchedule::Literal;

  // detection
  std::vector<Scheme> schemes = all_schemes();

  // throughput
  std::vector<std::pair<double, double>> alpha_profile;  // (MHz, dB)
  std::vector<std::pair<double, double>> snr_profile;    // (MHz, dB)
  std::vector<Band> bands;
  int tone_points = 8;
  std::optional<double> symbol_rate_hz;
  GapModel gap;

  // convergence
  int seeds = 100;
  int equivalence_seeds = 10;
  int equivalence_iterations = 10;
  int envelope_iterations = 10;

  ScenarioConfig base_config() const {
    ScenarioConfig c;
    c.num_operators = operators;
    c.lines_per_operator = lines_per_operator;
    c.training_length = training_length;
    c.alpha = alpha.empty() ? 0.0 : alpha.front();
    c.noise_power = undb10(-snr_db.front());
    c.constellation = constellation;
    c.max_iterations = max_iterations;
    c.seed = seed;
    return c;
  }
};

namespace detail {

using nlohmann::json;

inline void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
T take(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
void maybe(const json& j, const char* key, const std::string& where, T& out) {
  if (j.contains(key)) out = take<T>(j, key, where);
}

inline std::vector<std::pair<double, double>> knots(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of [MHz, dB] pairs");
  std::vector<std::pair<double, double>> out;
  for (const auto& k : j) {
    if (!k.is_array() || k.size() != 2 || !k[0].is_number() || !k[1].is_number())
      throw ConfigError(where + ": each knot must be [MHz, dB]");
    out.emplace_back(k[0].get<double>(), k[1].get<double>());
  }
  return out;
}

inline void positive(long v, const std::string& what) {
  if (v < 1) throw ConfigError(what + " must be >= 1");
}

}  // namespace detail

inline ScenarioFile parse_scenario(const nlohmann::json& j) {
  using detail::maybe;
  using detail::take;
  ScenarioFile s;
  detail::only_keys(j, "scenario",
                    {"name", "experiment", "seed", "system", "sweep", "estimation", "detection", "throughput",
                     "convergence"});
  s.name = take<std::string>(j, "name", "scenario");
  s.experiment = take<std::string>(j, "experiment", "scenario");
  if (s.experiment != "chanest" && s.experiment != "mud" && s.experiment != "throughput" &&
      s.experiment != "convergence")
    throw ConfigError("scenario.experiment: must be chanest, mud, throughput or convergence");
  maybe(j, "seed", "scenario", s.seed);

  if (j.contains("system")) {
    const auto& sy = j["system"];
    detail::only_keys(sy, "system",
                      {"operators", "lines_per_operator", "training_length", "constellation", "max_iterations"});
    maybe(sy, "operators", "system", s.operators);
    maybe(sy, "lines_per_operator", "system", s.lines_per_operator);
    maybe(sy, "training_length", "system", s.training_length);
    maybe(sy, "max_iterations", "system", s.max_iterations);
    if (sy.contains("constellation")) s.constellation = parse_modulation(take<std::string>(sy, "constellation", "system"));
  }
  if (j.contains("sweep")) {
    const auto& sw = j["sweep"];
    detail::only_keys(sw, "sweep", {"alpha", "alpha_db", "snr_db", "operators", "trials", "symbols"});
    if (sw.contains("alpha") && sw.contains("alpha_db")) throw ConfigError("sweep: give alpha or alpha_db, not both");
    maybe(sw, "alpha", "sweep", s.alpha);
    if (sw.contains("alpha_db"))
      for (double d : take<std::vector<double>>(sw, "alpha_db", "sweep")) s.alpha.push_back(amp_from_db20(d));
    maybe(sw, "snr_db", "sweep", s.snr_db);
    maybe(sw, "operators", "sweep", s.operator_counts);
    maybe(sw, "trials", "sweep", s.trials);
    maybe(sw, "symbols", "sweep", s.symbols);
  }
  if (j.contains("estimation")) {
    const auto& e = j["estimation"];
    detail::only_keys(e, "estimation", {"orthogonal_training", "schedule"});
    maybe(e, "orthogonal_training", "estimation", s.orthogonal_training);
    if (e.contains("schedule")) {
      const auto v = take<std::string>(e, "schedule", "estimation");
      if (v == "literal")
        s.schedule = EstimationSchedule::Literal;
      else if (v == "jacobi")
        s.schedule = EstimationSchedule::Jacobi;
      else
        throw ConfigError("estimation.schedule: must be literal or jacobi");
    }
  }
  if (j.contains("detection")) {
    const auto& d = j["detection"];
    detail::only_keys(d, "detection", {"schemes"});
    if (d.contains("schemes")) {
      s.schemes.clear();
      for (const auto& n : take<std::vector<std::string>>(d, "schemes", "detection")) s.schemes.push_back(parse_scheme(n));
      if (s.schemes.empty()) throw ConfigError("detection.schemes: must not be empty");
    }
  }
  if (j.contains("throughput")) {
    const auto& t = j["throughput"];
    detail::only_keys(t, "throughput", {"alpha_profile", "snr_profile", "bands", "tone_points", "symbol_rate_hz", "gap"});
    if (t.contains("alpha_profile")) s.alpha_profile = detail::knots(t["alpha_profile"], "throughput.alpha_profile");
    if (t.contains("snr_profile")) s.snr_profile = detail::knots(t["snr_profile"], "throughput.snr_profile");
    if (t.contains("bands")) {
      if (!t["bands"].is_array()) throw ConfigError("throughput.bands: expected an array");
      for (const auto& b : t["bands"]) {
        detail::only_keys(b, "throughput.bands[]", {"name", "f_lo_mhz", "f_hi_mhz"});
        Band band{take<std::string>(b, "name", "band"), take<double>(b, "f_lo_mhz", "band"),
                  take<double>(b, "f_hi_mhz", "band")};
        if (band.f_hi_mhz < band.f_lo_mhz) throw ConfigError("throughput.bands: f_hi_mhz < f_lo_mhz");
        s.bands.push_back(band);
      }
    }
    maybe(t, "tone_points", "throughput", s.tone_points);
    if (t.contains("symbol_rate_hz")) s.symbol_rate_hz = take<double>(t, "symbol_rate_hz", "throughput");
    if (t.contains("gap")) {
      const auto& g = t["gap"];
      detail::only_keys(g, "throughput.gap", {"gamma_db", "max_bits", "framing_overhead", "tone_spacing_hz", "integer_bits"});
      maybe(g, "gamma_db", "gap", s.gap.gamma_db);
      maybe(g, "max_bits", "gap", s.gap.max_bits);
      maybe(g, "framing_overhead", "gap", s.gap.framing_overhead);
      maybe(g, "tone_spacing_hz", "gap", s.gap.tone_spacing_hz);
      maybe(g, "integer_bits", "gap", s.gap.integer_bits);
    }
  }
  if (j.contains("convergence")) {
    const auto& c = j["convergence"];
    detail::only_keys(c, "convergence", {"seeds", "equivalence_seeds", "equivalence_iterations", "envelope_iterations"});
    maybe(c, "seeds", "convergence", s.seeds);
    maybe(c, "equivalence_seeds", "convergence", s.equivalence_seeds);
    maybe(c, "equivalence_iterations", "convergence", s.equivalence_iterations);
    maybe(c, "envelope_iterations", "convergence", s.envelope_iterations);
  }

  // Cross-field validation.
  detail::positive(s.operators, "system.operators");
  detail::positive(s.lines_per_operator, "system.lines_per_operator");
  detail::positive(s.max_iterations, "system.max_iterations");
  detail::positive(s.trials, "sweep.trials");
  detail::positive(s.symbols, "sweep.symbols");
  if (s.operator_counts.empty()) s.operator_counts = {s.operators};
  for (int k : s.operator_counts) detail::positive(k, "sweep.operators[]");
  for (double a : s.alpha)
    if (!(a >= 0.0)) throw ConfigError("sweep.alpha: values must be >= 0");
  if (s.snr_db.empty()) throw ConfigError("sweep.snr_db: must not be empty");
  if (s.training_length <= s.lines_per_operator) throw ConfigError("system.training_length must exceed lines_per_operator");
  s.gap.validate();
  if (s.experiment != "throughput" && s.alpha.empty()) throw ConfigError("sweep: alpha or alpha_db is required");
  if (s.experiment == "throughput") {
    if (s.alpha_profile.empty()) throw ConfigError("throughput.alpha_profile: required");
    AlphaProfile check(s.alpha_profile);
    if (!s.snr_profile.empty()) AlphaProfile snr_check(s.snr_profile);
    if (s.bands.empty()) throw ConfigError("throughput.bands: required");
    if (!s.symbol_rate_hz || !(*s.symbol_rate_hz > 0.0)) throw ConfigError("throughput.symbol_rate_hz: required and > 0");
    detail::positive(s.tone_points, "throughput.tone_points");
  }
  if (s.experiment == "convergence") {
    detail::positive(s.seeds, "convergence.seeds");
    detail::positive(s.equivalence_iterations, "convergence.equivalence_iterations");
    if (s.equivalence_seeds < 0) throw ConfigError("convergence.equivalence_seeds must be >= 0");
  }
  return s;
}

inline ScenarioFile load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_scenario(j);
}

}  // namespace icvec
