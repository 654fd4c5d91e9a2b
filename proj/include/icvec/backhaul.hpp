// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <algorithm>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "icvec/message.hpp"
#include "icvec/types.hpp"

namespace icvec {

/// Every message that crossed the bus, in delivery order, plus tallies.
class RoundLog {
 public:
  RoundLog() = default;
  explicit RoundLog(int K) : K_(K) {}

  int K() const { return K_; }
  int rounds_completed() const { return rounds_completed_; }
  bool aborted() const { return aborted_; }
  const std::string& abort_reason() const { return abort_reason_; }
  const std::vector<InterferenceMessage>& messages() const { return messages_; }

  void record(const InterferenceMessage& m) { messages_.push_back(m); }
  void close_round(int r) { rounds_completed_ = std::max(rounds_completed_, r); }
  void abort(std::string why) {
    aborted_ = true;
    abort_reason_ = std::move(why);
  }

  /// Complex scalars sent by `op` during `round`, normalized per symbol time
  /// when `per_column` is set (MUD payloads carry L columns).
  std::size_t scalars_sent(int op, int round, bool per_column = false) const {
    return tally(op, round, per_column, true);
  }
  std::size_t scalars_received(int op, int round, bool per_column = false) const {
    return tally(op, round, per_column, false);
  }
  std::size_t messages_in_round(int round) const {
    return static_cast<std::size_t>(
        std::count_if(messages_.begin(), messages_.end(), [&](const auto& m) { return m.round() == round; }));
  }
  /// Cumulative complex scalars over all operators and rounds.
  std::size_t total_scalars() const {
    std::size_t s = 0;
    for (const auto& m : messages_) s += m.complex_count();
    return s;
  }
  std::size_t total_bytes() const {
    std::size_t s = 0;
    for (const auto& m : messages_) s += m.byte_size();
    return s;
  }

  /// Per-message metadata only; payloads never leave through this path.
  nlohmann::json to_json() const {
    nlohmann::json j;
    j["operators"] = K_;
    j["rounds_completed"] = rounds_completed_;
    j["aborted"] = aborted_;
    if (aborted_) j["abort_reason"] = abort_reason_;
    auto& arr = j["messages"] = nlohmann::json::array();
    for (std::size_t i = 0; i < messages_.size(); ++i) {
      const auto& m = messages_[i];
      arr.push_back({{"id", i},
                     {"round", m.round()},
                     {"phase", m.phase()},
                     {"sender", m.sender()},
                     {"receiver", m.receiver()},
                     {"kind", std::string(to_string(m.kind()))},
                     {"rows", m.payload().rows()},
                     {"cols", m.payload().cols()},
                     {"bytes", m.byte_size()}});
    }
    auto& ops = j["per_operator"] = nlohmann::json::array();
    for (int k = 0; k < K_; ++k) {
      std::size_t sent = 0, recv = 0;
      for (const auto& m : messages_) {
        if (m.sender() == k) sent += m.complex_count();
        if (m.receiver() == k) recv += m.complex_count();
      }
      ops.push_back({{"operator", k}, {"scalars_sent", sent}, {"scalars_received", recv}});
    }
    j["total_scalars"] = total_scalars();
    j["total_bytes"] = total_bytes();
    return j;
  }

  /// One file per message, `msg_<id>.bin`, in the wire encoding.
  void dump_payloads(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < messages_.size(); ++i) {
      const auto bytes = messages_[i].encode();
      std::ofstream f(dir / ("msg_" + std::to_string(i) + ".bin"), std::ios::binary);
      if (!f) throw std::runtime_error("cannot write payload dump in " + dir.string());
      f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
  }

 private:
  std::size_t tally(int op, int round, bool per_column, bool sent) const {
    std::size_t s = 0;
    for (const auto& m : messages_) {
      if (m.round() != round || (sent ? m.sender() : m.receiver()) != op) continue;
      s += per_column ? static_cast<std::size_t>(m.payload().rows()) : m.complex_count();
    }
    return s;
  }

  int K_ = 0;
  int rounds_completed_ = 0;
  bool aborted_ = false;
  std::string abort_reason_;
  std::vector<InterferenceMessage> messages_;
};

/// A protocol participant. `emit` may update local state (it runs after the
/// previous phase was absorbed); `absorb` receives every message addressed to
/// this node in the given phase.
template <class Node>
concept RoundNode = requires(Node& n, const Node& cn, int r, int p, std::span<const InterferenceMessage> in) {
  { cn.id() } -> std::convertible_to<int>;
  { cn.phases() } -> std::convertible_to<int>;
  { n.emit(r, p) } -> std::same_as<std::vector<InterferenceMessage>>;
  n.absorb(r, p, in);
};

struct BusOptions {
  /// Run the per-node work of a phase concurrently.
  bool parallel_nodes = false;
  /// Permute each inbox before delivery; results must not depend on it.
  bool shuffle_delivery = false;
  std::uint64_t shuffle_seed = 0;
  /// Round number stamped on the first round (0 is used for priming).
  int first_round = 1;
  /// Fault injector: return true to drop the message.
  std::function<bool(const InterferenceMessage&)> drop;
};

namespace detail {

template <class F>
void for_each_node(std::size_t n, bool parallel, F&& f) {
  if (!parallel || n < 2) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::future<void>> fut;
  fut.reserve(n);
  for (std::size_t i = 0; i < n; ++i) fut.push_back(std::async(std::launch::async, [&f, i] { f(i); }));
  for (auto& x : fut) x.get();  // rethrows the first failure
}

}  // namespace detail

/// Synchronous-round bus. Within a round, every node finishes phase p
/// (emit, then absorb of the complete phase-p traffic) before any node starts
/// phase p + 1. `after_round` may return false to stop early. A
/// ProtocolError anywhere stops the run and returns the log accumulated so
/// far with `aborted()` set.
template <RoundNode Node>
RoundLog run_rounds(std::span<Node> nodes, int n_rounds, const BusOptions& opt = {},
                    const std::function<bool(int)>& after_round = {}) {
  const int K = static_cast<int>(nodes.size());
  RoundLog log(K);
  if (n_rounds < 0) throw ConfigError("run_rounds: negative round count");
  for (int k = 0; k < K; ++k)
    if (nodes[k].id() != k) throw ProtocolError("run_rounds: node ids must be 0..K-1 in order");
  const int phases = K > 0 ? nodes[0].phases() : 0;

  // Logical clock per node: (round, phase) of the last completed emit.
  std::vector<std::pair<int, int>> clock(K, {opt.first_round - 1, -1});
  std::mt19937_64 shuffler(opt.shuffle_seed);

  try {
    for (int r = opt.first_round; r < opt.first_round + n_rounds; ++r) {
      for (int p = 0; p < phases; ++p) {
        std::vector<std::vector<InterferenceMessage>> out(K);
        detail::for_each_node(K, opt.parallel_nodes, [&](std::size_t k) { out[k] = nodes[k].emit(r, p); });

        std::vector<std::vector<InterferenceMessage>> inbox(K);
        for (int k = 0; k < K; ++k) {
          clock[k] = {r, p};
          for (auto& m : out[k]) {
            if (m.sender() != k) throw ProtocolError("bus: node " + std::to_string(k) + " forged a sender id");
            if (m.receiver() < 0 || m.receiver() >= K) throw ProtocolError("bus: receiver out of range");
            if (m.round() != r || m.phase() != p) throw ProtocolError("bus: message stamped with a foreign round/phase");
            log.record(m);
            if (opt.drop && opt.drop(m)) continue;
            inbox[m.receiver()].push_back(std::move(m));
          }
        }
        // Barrier: every sender has reached (r, p) before anything is absorbed.
        for (int k = 0; k < K; ++k)
          if (clock[k] != std::pair{r, p}) throw ProtocolError("bus: phase barrier violated");
        if (opt.shuffle_delivery)
          for (auto& box : inbox) std::shuffle(box.begin(), box.end(), shuffler);

        detail::for_each_node(K, opt.parallel_nodes, [&](std::size_t k) {
          nodes[k].absorb(r, p, std::span<const InterferenceMessage>(inbox[k]));
        });
      }
      log.close_round(r);
      if (after_round && !after_round(r)) break;
    }
  } catch (const ProtocolError& e) {
    log.abort(e.what());
  }
  return log;
}

/// Collect one message per peer from an inbox, indexed by sender. Missing or
/// duplicated peers and unexpected kinds are protocol violations.
inline std::vector<const InterferenceMessage*> index_by_sender(std::span<const InterferenceMessage> inbox, int self,
                                                              int K, MessageKind kind) {
  std::vector<const InterferenceMessage*> by(K, nullptr);
  for (const auto& m : inbox) {
    if (m.receiver() != self) throw ProtocolError("inbox: misaddressed message");
    if (m.kind() != kind) throw ProtocolError("inbox: unexpected kind " + std::string(to_string(m.kind())));
    if (by[m.sender()]) throw ProtocolError("inbox: duplicate message from " + std::to_string(m.sender()));
    by[m.sender()] = &m;
  }
  for (int m = 0; m < K; ++m)
    if (m != self && !by[m])
      throw ProtocolError("inbox: node " + std::to_string(self) + " missing message from " + std::to_string(m));
  return by;
}

// ---------------------------------------------------------------------------
// Structural leak check

struct LeakFinding {
  std::size_t message_id = 0;
  std::string secret;
  std::string detail;
};

struct LeakReport {
  bool pass = true;
  std::vector<LeakFinding> findings;
};

struct NamedSecret {
  std::string name;
  CMat value;
};

namespace detail {

inline bool rows_match(const CMat& a, Eigen::Index ra, const CMat& b, Eigen::Index rb, double tol) {
  return (a.row(ra) - b.row(rb)).cwiseAbs().maxCoeff() <= tol;
}

/// True if every row of `payload` equals a distinct row of `secret`.
inline bool is_row_permutation(const CMat& payload, const CMat& secret, double tol) {
  if (payload.rows() != secret.rows() || payload.cols() != secret.cols()) return false;
  std::vector<bool> used(secret.rows(), false);
  for (Eigen::Index r = 0; r < payload.rows(); ++r) {
    bool found = false;
    for (Eigen::Index s = 0; s < secret.rows() && !found; ++s)
      if (!used[s] && rows_match(payload, r, secret, s, tol)) used[s] = found = true;
    if (!found) return false;
  }
  return true;
}

}  // namespace detail

/// Flags any payload equal (within `tol`) to a secret matrix or to a row
/// permutation of it. A product-kind payload can only match when the mixing
/// block is itself a permutation, e.g. a degenerate identity channel.
inline LeakReport leak_check(const RoundLog& log, std::span<const NamedSecret> secrets, double tol = 1e-12) {
  LeakReport rep;
  for (std::size_t i = 0; i < log.messages().size(); ++i) {
    const auto& m = log.messages()[i];
    const auto k = m.kind();
    if (k < MessageKind::EstResidual || k > MessageKind::DcSymbols)
      rep.findings.push_back({i, "", "untagged payload kind"});
    for (const auto& s : secrets) {
      if (!detail::is_row_permutation(m.payload(), s.value, tol)) continue;
      std::string what = "payload reproduces secret";
      if (k == MessageKind::EstReencoded || k == MessageKind::MudRemixed)
        what += " (mixing block is a permutation: degenerate channel or forged estimate)";
      else if (k == MessageKind::DcSymbols)
        what += " (decoded-data exchange)";
      rep.findings.push_back({i, s.name, what});
    }
  }
  rep.pass = rep.findings.empty();
  return rep;
}

}  // namespace icvec
