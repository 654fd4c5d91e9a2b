// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icvec/types.hpp"

namespace icvec {

enum class MessageKind : std::uint16_t {
  EstResidual = 1,   // Y_m - H_mm X_m - sum_p H_pm X_p        (N x T)
  EstReencoded = 2,  // H_km X_k                               (N x T)
  MudStripped = 3,   // y_m - H_mm x_m - sum_l H_lm x_l        (N x L)
  MudRemixed = 4,    // H_km x_k                               (N x L)
  DcSymbols = 5,     // x_k, data cooperation baseline only    (N x L)
};

inline std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::EstResidual: return "EstResidual";
    case MessageKind::EstReencoded: return "EstReencoded";
    case MessageKind::MudStripped: return "MudStripped";
    case MessageKind::MudRemixed: return "MudRemixed";
    case MessageKind::DcSymbols: return "DcSymbols";
  }
  return "?";
}

/// Addressing and logical timestamp of a message.
struct Envelope {
  int round = 0;
  int phase = 0;
  int sender = 0;
  int receiver = 0;
};

/// Backhaul payload. Interference kinds can only be built from their
/// generating factors (a channel block times the sender's own training or
/// symbols, or a stripped residual), so the raw training or symbols of a
/// sender never appear as a payload by construction.
class InterferenceMessage {
 public:
  static constexpr std::size_t kHeaderBytes = 32;
  static constexpr std::uint32_t kMagic = 0x42564349;  // "ICVB"

  const Envelope& envelope() const { return env_; }
  int round() const { return env_.round; }
  int phase() const { return env_.phase; }
  int sender() const { return env_.sender; }
  int receiver() const { return env_.receiver; }
  MessageKind kind() const { return kind_; }
  const CMat& payload() const { return payload_; }

  std::size_t complex_count() const { return static_cast<std::size_t>(payload_.size()); }
  /// Payload bytes: 64-bit real and imaginary parts per entry.
  std::size_t byte_size() const { return 8 * 2 * complex_count(); }

  /// H_km X_k for the estimation exchange.
  static InterferenceMessage reencoded(Envelope env, const CMat& alien_block, const CMat& own_training) {
    return {env, MessageKind::EstReencoded, alien_block * own_training};
  }

  /// Y_own - H_own,own X_own - sum of the re-encoded products received from
  /// every third operator.
  static InterferenceMessage est_residual(Envelope env, const CMat& received, const CMat& self_block,
                                          const CMat& own_training, std::span<const CMat* const> third_party) {
    CMat r = received - self_block * own_training;
    for (const CMat* p : third_party) r -= *p;
    return {env, MessageKind::EstResidual, std::move(r)};
  }

  static InterferenceMessage remixed(Envelope env, const CMat& alien_block, const CMat& own_symbols) {
    return {env, MessageKind::MudRemixed, alien_block * own_symbols};
  }

  static InterferenceMessage mud_stripped(Envelope env, const CMat& received, const CMat& self_block,
                                          const CMat& own_symbols, std::span<const CMat* const> third_party) {
    CMat r = received - self_block * own_symbols;
    for (const CMat* p : third_party) r -= *p;
    return {env, MessageKind::MudStripped, std::move(r)};
  }

  /// Decoded-data exchange. Only the data-cooperation baseline emits these.
  static InterferenceMessage dc_symbols(Envelope env, const CMat& own_symbols) {
    return {env, MessageKind::DcSymbols, own_symbols};
  }

  // Wire encoding: 32-byte little-endian header
  //   u32 magic | u16 kind | u16 phase | u32 round | u32 sender | u32 receiver
  //   | u32 rows | u32 cols | u32 reserved(0)
  // followed by rows*cols entries in row-major order, each as f64 re, f64 im.
  std::vector<std::uint8_t> encode() const {
    std::vector<std::uint8_t> out(kHeaderBytes + byte_size());
    std::uint8_t* p = out.data();
    put_u32(p, kMagic);
    put_u16(p + 4, static_cast<std::uint16_t>(kind_));
    put_u16(p + 6, static_cast<std::uint16_t>(env_.phase));
    put_u32(p + 8, static_cast<std::uint32_t>(env_.round));
    put_u32(p + 12, static_cast<std::uint32_t>(env_.sender));
    put_u32(p + 16, static_cast<std::uint32_t>(env_.receiver));
    put_u32(p + 20, static_cast<std::uint32_t>(payload_.rows()));
    put_u32(p + 24, static_cast<std::uint32_t>(payload_.cols()));
    put_u32(p + 28, 0);
    p += kHeaderBytes;
    for (Eigen::Index r = 0; r < payload_.rows(); ++r)
      for (Eigen::Index c = 0; c < payload_.cols(); ++c) {
        put_f64(p, payload_(r, c).real());
        put_f64(p + 8, payload_(r, c).imag());
        p += 16;
      }
    return out;
  }

  /// Payload size announced by an encoded header.
  static std::size_t payload_bytes_from_header(std::span<const std::uint8_t> header) {
    if (header.size() < kHeaderBytes) throw ProtocolError("wire: short header");
    if (get_u32(header.data()) != kMagic) throw ProtocolError("wire: bad magic");
    return std::size_t{16} * get_u32(header.data() + 20) * get_u32(header.data() + 24);
  }

  static InterferenceMessage decode(std::span<const std::uint8_t> bytes) {
    const std::size_t body = payload_bytes_from_header(bytes);
    if (bytes.size() != kHeaderBytes + body) throw ProtocolError("wire: length mismatch");
    const std::uint8_t* p = bytes.data();
    const auto kind = static_cast<MessageKind>(get_u16(p + 4));
    if (kind < MessageKind::EstResidual || kind > MessageKind::DcSymbols) throw ProtocolError("wire: unknown kind");
    Envelope env{static_cast<int>(get_u32(p + 8)), static_cast<int>(get_u16(p + 6)),
                 static_cast<int>(get_u32(p + 12)), static_cast<int>(get_u32(p + 16))};
    const Eigen::Index rows = get_u32(p + 20), cols = get_u32(p + 24);
    CMat m(rows, cols);
    p += kHeaderBytes;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        m(r, c) = cd(get_f64(p), get_f64(p + 8));
        p += 16;
      }
    return {env, kind, std::move(m)};
  }

 private:
  InterferenceMessage(Envelope env, MessageKind kind, CMat payload)
      : env_(env), kind_(kind), payload_(std::move(payload)) {
    if (env_.sender == env_.receiver) throw ProtocolError("message: sender equals receiver");
  }

  static void put_u16(std::uint8_t* p, std::uint16_t v) {
    p[0] = static_cast<std::uint8_t>(v);
    p[1] = static_cast<std::uint8_t>(v >> 8);
  }
  static void put_u32(std::uint8_t* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  static void put_f64(std::uint8_t* p, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  static std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
  static std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
    return v;
  }
  static double get_f64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }

  Envelope env_;
  MessageKind kind_;
  CMat payload_;
};

}  // namespace icvec
