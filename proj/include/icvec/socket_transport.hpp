// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The icvec Authors

#pragma once

#include <cerrno>
#include <cstring>
#include <vector>

#include <sys/socket.h>
#include <unistd.h>

#include "icvec/message.hpp"

// Stream transport carrying the wire encoding over a connected descriptor
// (TCP loopback or a socketpair). Integration-test use only.

namespace icvec {

namespace detail {

inline void write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("socket send: ") + std::strerror(errno));
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

inline void read_all(int fd, std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::recv(fd, p, n, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("socket recv: ") + std::strerror(errno));
    }
    if (r == 0) throw ProtocolError("socket recv: peer closed");
    p += r;
    n -= static_cast<std::size_t>(r);
  }
}

}  // namespace detail

inline void send_message(int fd, const InterferenceMessage& m) {
  const auto bytes = m.encode();
  detail::write_all(fd, bytes.data(), bytes.size());
}

inline InterferenceMessage recv_message(int fd) {
  std::vector<std::uint8_t> buf(InterferenceMessage::kHeaderBytes);
  detail::read_all(fd, buf.data(), buf.size());
  const std::size_t body = InterferenceMessage::payload_bytes_from_header(buf);
  buf.resize(buf.size() + body);
  detail::read_all(fd, buf.data() + InterferenceMessage::kHeaderBytes, body);
  return InterferenceMessage::decode(buf);
}

}  // namespace icvec
