// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "catch_amalgamated.hpp"

#include "icvec/backhaul.hpp"
#include "icvec/detection.hpp"
#include "icvec/estimation.hpp"
#include "icvec/signal.hpp"
#include "icvec/socket_transport.hpp"

using namespace icvec;

namespace {

struct Link {
  MultiOperatorChannel H;
  SymbolFrame x;
  ReceivedFrame y;
};

Link make_link(int K, int N, double alpha, Eigen::Index L, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.num_operators = K;
  cfg.lines_per_operator = N;
  cfg.training_length = N + 1;
  cfg.alpha = alpha;
  auto rc = make_stream(seed, Stream::channel);
  auto rs = make_stream(seed, Stream::symbols);
  auto rn = make_stream(seed, Stream::noise);
  Link l{synth_channel(cfg, rc), draw_symbols(cfg, L, rs), {}};
  l.y = transmit(l.H, l.x, 0.01, rn);
  return l;
}

MudNodeOptions mud_options(int K, int N, double alpha) {
  MudNodeOptions o;
  o.sigma2 = 0.01;
  o.init_noise = interference_plus_noise(N, K, alpha, 0.01);
  return o;
}

// Emits well-formed traffic, except that it re-encodes its raw training with
// a forged identity "estimate".
class ForgingNode {
 public:
  ForgingNode(IcEstimationNode inner, CMat X) : inner_(std::move(inner)), X_(std::move(X)) {}
  int id() const { return inner_.id(); }
  int phases() const { return 2; }
  std::vector<InterferenceMessage> emit(int r, int p) {
    auto out = inner_.emit(r, p);
    if (p == 1 && id() == 0)
      out[0] = InterferenceMessage::reencoded(out[0].envelope(), CMat::Identity(X_.rows(), X_.rows()), X_);
    return out;
  }
  void absorb(int r, int p, std::span<const InterferenceMessage> in) { inner_.absorb(r, p, in); }

 private:
  IcEstimationNode inner_;
  CMat X_;
};

// Misbehaving node for bus-level checks.
struct RogueNode {
  int id_ = 0;
  int K = 2;
  enum class Fault { None, ForgedSender, WrongRound } fault = Fault::None;
  int absorbed = 0;
  int id() const { return id_; }
  int phases() const { return 1; }
  std::vector<InterferenceMessage> emit(int r, int p) const {
    const int to = (id_ + 1) % K;
    Envelope e{r, p, id_, to};
    if (fault == Fault::ForgedSender) {
      e.sender = to;
      e.receiver = id_;
    }
    if (fault == Fault::WrongRound) e.round = r + 1;
    return {InterferenceMessage::dc_symbols(e, CMat::Ones(1, 1))};
  }
  void absorb(int, int, std::span<const InterferenceMessage> in) { absorbed += static_cast<int>(in.size()); }
};

}  // namespace

TEST_CASE("signaling counters per round", "[backhaul]") {
  for (int K : {2, 3})
    for (int N : {1, 10}) {
      const auto l = make_link(K, N, 0.5, 1, 1);
      const Constellation c(Modulation::QPSK);
      const auto ic = run_ic_mud(l.H, l.y.y, c, 2, mud_options(K, N, 0.5));
      const auto dc = run_dc_mud(l.H, l.y.y, c, 2, mud_options(K, N, 0.5));
      REQUIRE_FALSE(ic.log.aborted());
      for (int r = 1; r <= 2; ++r) {
        CHECK(ic.log.messages_in_round(r) == std::size_t(2 * K * (K - 1)));
        CHECK(dc.log.messages_in_round(r) == std::size_t(K * (K - 1)));
        for (int k = 0; k < K; ++k) {
          CHECK(ic.log.scalars_sent(k, r) == std::size_t(2 * (K - 1) * N));
          CHECK(ic.log.scalars_received(k, r) == std::size_t(2 * (K - 1) * N));
          CHECK(dc.log.scalars_sent(k, r) == std::size_t((K - 1) * N));
        }
      }
    }
}

TEST_CASE("counters scale with the symbol block", "[backhaul]") {
  const auto l = make_link(2, 10, 0.5, 4, 2);
  const auto run = run_ic_mud(l.H, l.y.y, Constellation(Modulation::QPSK), 1, mud_options(2, 10, 0.5));
  CHECK(run.log.scalars_sent(0, 1) == 80);
  CHECK(run.log.scalars_sent(0, 1, true) == 20);
  CHECK(run.log.total_scalars() == 160);
  CHECK(run.log.total_bytes() == 160 * 16);
}

TEST_CASE("zero rounds exchange nothing", "[backhaul]") {
  const auto l = make_link(2, 3, 0.5, 1, 3);
  const auto run = run_ic_mud(l.H, l.y.y, Constellation(Modulation::QPSK), 0, mud_options(2, 3, 0.5));
  CHECK(run.log.messages().empty());
  CHECK(run.log.rounds_completed() == 0);
  CHECK(run.decided_history.size() == 1);
}

TEST_CASE("delivery order and node concurrency do not change results", "[backhaul]") {
  const auto l = make_link(3, 4, 0.6, 2, 4);
  const Constellation c(Modulation::QPSK);
  const auto o = mud_options(3, 4, 0.6);
  const auto base = run_ic_mud(l.H, l.y.y, c, 4, o);
  BusOptions shuffled;
  shuffled.shuffle_delivery = true;
  shuffled.shuffle_seed = 77;
  BusOptions parallel;
  parallel.parallel_nodes = true;
  CHECK(run_ic_mud(l.H, l.y.y, c, 4, o, shuffled).decided == base.decided);
  CHECK(run_ic_mud(l.H, l.y.y, c, 4, o, parallel).decided == base.decided);
}

TEST_CASE("protocol violations abort with a partial log", "[backhaul]") {
  SECTION("dropped message") {
    const auto l = make_link(2, 3, 0.5, 1, 5);
    BusOptions bus;
    bus.drop = [](const InterferenceMessage& m) { return m.round() == 2 && m.phase() == 1 && m.sender() == 1; };
    const auto run = run_ic_mud(l.H, l.y.y, Constellation(Modulation::QPSK), 3, mud_options(2, 3, 0.5), bus);
    CHECK(run.log.aborted());
    CHECK(run.log.rounds_completed() == 1);
    CHECK(run.log.abort_reason().find("missing") != std::string::npos);
  }
  SECTION("forged sender") {
    std::vector<RogueNode> nodes{{0, 2, RogueNode::Fault::ForgedSender}, {1, 2}};
    const auto log = run_rounds(std::span<RogueNode>(nodes), 2);
    CHECK(log.aborted());
    CHECK(nodes[1].absorbed == 0);
  }
  SECTION("foreign round stamp") {
    std::vector<RogueNode> nodes{{0, 2}, {1, 2, RogueNode::Fault::WrongRound}};
    CHECK(run_rounds(std::span<RogueNode>(nodes), 1).aborted());
  }
  SECTION("well-behaved rogue nodes pass") {
    std::vector<RogueNode> nodes{{0, 2}, {1, 2}};
    const auto log = run_rounds(std::span<RogueNode>(nodes), 3);
    CHECK_FALSE(log.aborted());
    CHECK(nodes[0].absorbed == 3);
  }
}

TEST_CASE("inbox indexing", "[backhaul]") {
  const CMat p = CMat::Ones(1, 1);
  std::vector<InterferenceMessage> in{InterferenceMessage::dc_symbols({1, 0, 1, 0}, p),
                                      InterferenceMessage::dc_symbols({1, 0, 2, 0}, p)};
  CHECK(index_by_sender(in, 0, 3, MessageKind::DcSymbols)[2]->sender() == 2);
  CHECK_THROWS_AS(index_by_sender(in, 0, 3, MessageKind::MudRemixed), ProtocolError);
  CHECK_THROWS_AS(index_by_sender(in, 0, 4, MessageKind::DcSymbols), ProtocolError);
  in.push_back(InterferenceMessage::dc_symbols({1, 0, 1, 0}, p));
  CHECK_THROWS_AS(index_by_sender(in, 0, 3, MessageKind::DcSymbols), ProtocolError);
  CHECK_THROWS(InterferenceMessage::dc_symbols({1, 0, 1, 1}, p));
}

TEST_CASE("structural leak check", "[backhaul]") {
  ScenarioConfig cfg;
  cfg.num_operators = 2;
  cfg.lines_per_operator = 3;
  cfg.training_length = 12;
  cfg.alpha = 0.5;
  auto rc = make_stream(6, Stream::channel);
  auto rt = make_stream(6, Stream::training);
  const auto H = synth_channel(cfg, rc);
  const auto X = gen_training(cfg, rt);
  const CMat Y = H.full() * X.stacked();
  const std::vector<NamedSecret> secrets{{"training_0", X.for_operator(0).X}, {"training_1", X.for_operator(1).X}};

  SECTION("well-formed estimation run passes") {
    const auto run = run_ic_estimation(Y, X, {});
    CHECK(leak_check(run.log, secrets).pass);
  }
  SECTION("raw training smuggled through a forged estimate is caught") {
    std::vector<ForgingNode> nodes;
    for (int k = 0; k < 2; ++k)
      nodes.emplace_back(IcEstimationNode(k, 2, Y.middleRows(3 * k, 3), X.for_operator(k)), X.for_operator(k).X);
    const auto log = run_rounds(std::span<ForgingNode>(nodes), 1);
    const auto rep = leak_check(log, secrets);
    REQUIRE_FALSE(rep.pass);
    REQUIRE(rep.findings.size() == 1);
    const auto& f = rep.findings[0];
    CHECK(f.secret == "training_0");
    CHECK(log.messages()[f.message_id].kind() == MessageKind::EstReencoded);
    CHECK(log.messages()[f.message_id].sender() == 0);
  }
  SECTION("an identity mixing block exposes symbols") {
    ScenarioConfig c2 = cfg;
    c2.lines_per_operator = 2;
    auto rs = make_stream(6, Stream::symbols);
    const auto x = draw_symbols(c2, 5, rs);
    // Operator 1 couples into operator 0 through an identity block.
    CMat full = CMat::Identity(4, 4);
    full.block(0, 2, 2, 2) = CMat::Identity(2, 2);
    full.block(2, 0, 2, 2) = CMat::Identity(2, 2) * 0.5;
    const MultiOperatorChannel Hd(2, 2, full);
    const CMat y = Hd.full() * x.x;
    MudNodeOptions o;
    o.decision = Decision::Hard;
    o.sigma2 = 0.01;
    o.init_noise = 0.01;
    const auto run = run_ic_mud(Hd, y, Constellation(Modulation::QPSK), 1, o);
    const std::vector<NamedSecret> sym{{"symbols_1", x.x.middleRows(2, 2)}};
    const auto rep = leak_check(run.log, sym, 1e-9);
    REQUIRE_FALSE(rep.pass);
    bool remixed = false;
    for (const auto& f : rep.findings) {
      const auto& m = run.log.messages()[f.message_id];
      if (m.kind() != MessageKind::MudRemixed) continue;
      remixed = true;
      CHECK(m.sender() == 1);
      CHECK(f.detail.find("degenerate") != std::string::npos);
    }
    CHECK(remixed);
  }
}

TEST_CASE("wire encoding", "[backhaul]") {
  CMat p(2, 3);
  p << cd(1, -1), cd(0.5, 2), cd(-3, 0), cd(1e-300, 7), cd(-0.0, 1e300), cd(3.25, -8);
  const auto m = InterferenceMessage::remixed({7, 0, 2, 1}, CMat::Identity(2, 2), p);
  const auto bytes = m.encode();
  REQUIRE(bytes.size() == 32 + 6 * 16);
  CHECK(bytes[0] == 0x49);
  CHECK(bytes[3] == 0x42);
  CHECK(bytes[4] == 4);  // kind, little-endian
  CHECK(InterferenceMessage::payload_bytes_from_header(bytes) == 96);
  const auto back = InterferenceMessage::decode(bytes);
  CHECK(back.payload() == p);
  CHECK(back.round() == 7);
  CHECK(back.sender() == 2);
  CHECK(back.receiver() == 1);
  CHECK(back.kind() == MessageKind::MudRemixed);

  auto bad = bytes;
  bad[0] ^= 0xff;
  CHECK_THROWS_AS(InterferenceMessage::decode(bad), ProtocolError);
  CHECK_THROWS_AS(InterferenceMessage::decode(std::span(bytes).first(40)), ProtocolError);
}

TEST_CASE("socket transport round trip", "[backhaul]") {
  int fds[2];
  REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
  auto rng = make_stream(8, Stream::aux);
  std::vector<InterferenceMessage> sent;
  for (int i = 0; i < 5; ++i)
    sent.push_back(InterferenceMessage::remixed({i, i % 2, 0, 1}, complex_normal_matrix(rng, 40, 40, 1.0),
                                                complex_normal_matrix(rng, 40, 30, 1.0)));
  std::thread writer([&] {
    for (const auto& m : sent) send_message(fds[0], m);
    ::close(fds[0]);
  });
  for (const auto& m : sent) {
    const auto got = recv_message(fds[1]);
    CHECK(got.payload() == m.payload());
    CHECK(got.round() == m.round());
  }
  writer.join();
  CHECK_THROWS_AS(recv_message(fds[1]), ProtocolError);
  ::close(fds[1]);
}

TEST_CASE("log export", "[backhaul]") {
  const auto l = make_link(2, 2, 0.5, 1, 9);
  const auto run = run_dc_mud(l.H, l.y.y, Constellation(Modulation::QPSK), 1, mud_options(2, 2, 0.5));
  const auto j = run.log.to_json();
  CHECK(j["messages"].size() == 2);
  CHECK(j["messages"][0]["kind"] == std::string(to_string(MessageKind::DcSymbols)));
  CHECK_FALSE(j["messages"][0].contains("payload"));
  CHECK(j["per_operator"][1]["scalars_sent"] == 2);

  const std::filesystem::path dir = std::filesystem::path(ICVEC_TEST_WORKDIR) / "payloads";
  std::filesystem::remove_all(dir);
  run.log.dump_payloads(dir);
  std::ifstream f(dir / "msg_1.bin", std::ios::binary);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), {});
  CHECK(InterferenceMessage::decode(bytes).payload() == run.log.messages()[1].payload());
}
