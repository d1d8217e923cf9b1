// Copyright 2026 The qctl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// POSIX UDP multicast transport for control datagrams.

#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qctl/error.hpp"
#include "qctl/protocol.hpp"

namespace qctl {

namespace detail {

class Socket {
 public:
  Socket() : fd_(::socket(AF_INET, SOCK_DGRAM, 0)) {
    if (fd_ < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
  }
  ~Socket() {
    if (fd_ >= 0) ::close(fd_);
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    std::swap(fd_, o.fd_);
    return *this;
  }
  int fd() const noexcept { return fd_; }

 private:
  int fd_;
};

inline in_addr parse_ipv4(const std::string& addr) {
  in_addr a{};
  if (::inet_pton(AF_INET, addr.c_str(), &a) != 1) {
    throw InvalidArgument("not an IPv4 address: " + addr);
  }
  return a;
}

inline void check(int rc, const char* what) {
  if (rc < 0) throw IoError(std::string(what) + ": " + std::strerror(errno));
}

}  // namespace detail

/// Sends datagrams to a group (or any unicast address) and port.
class UdpSender {
 public:
  UdpSender(const std::string& addr, std::uint16_t port, int ttl = 1) {
    dest_.sin_family = AF_INET;
    dest_.sin_port = htons(port);
    dest_.sin_addr = detail::parse_ipv4(addr);
    const unsigned char t = static_cast<unsigned char>(ttl);
    const unsigned char loop = 1;
    ::setsockopt(sock_.fd(), IPPROTO_IP, IP_MULTICAST_TTL, &t, sizeof t);
    ::setsockopt(sock_.fd(), IPPROTO_IP, IP_MULTICAST_LOOP, &loop, sizeof loop);
  }

  void send(const WireBytes& bytes) {
    detail::check(static_cast<int>(::sendto(sock_.fd(), bytes.data(), bytes.size(), 0,
                                            reinterpret_cast<const sockaddr*>(&dest_),
                                            sizeof dest_)),
                  "sendto");
  }

 private:
  detail::Socket sock_;
  sockaddr_in dest_{};
};

/// Binds the port and, for a multicast address, joins the group on any
/// interface.
class UdpReceiver {
 public:
  UdpReceiver(const std::string& addr, std::uint16_t port) {
    const int one = 1;
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in bind_addr{};
    bind_addr.sin_family = AF_INET;
    bind_addr.sin_port = htons(port);
    bind_addr.sin_addr.s_addr = htonl(INADDR_ANY);
    detail::check(
        ::bind(sock_.fd(), reinterpret_cast<const sockaddr*>(&bind_addr), sizeof bind_addr),
        "bind");
    const in_addr group = detail::parse_ipv4(addr);
    if (IN_MULTICAST(ntohl(group.s_addr))) {
      ip_mreq mreq{};
      mreq.imr_multiaddr = group;
      mreq.imr_interface.s_addr = htonl(INADDR_ANY);
      detail::check(
          ::setsockopt(sock_.fd(), IPPROTO_IP, IP_ADD_MEMBERSHIP, &mreq, sizeof mreq),
          "IP_ADD_MEMBERSHIP");
    }
  }

  /// Port actually bound (useful after binding port 0).
  std::uint16_t port() const {
    sockaddr_in a{};
    socklen_t len = sizeof a;
    detail::check(::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&a), &len),
                  "getsockname");
    return ntohs(a.sin_port);
  }

  /// Next datagram, or nullopt after `timeout_ms` without one.
  std::optional<std::vector<std::uint8_t>> receive(int timeout_ms) {
    pollfd p{sock_.fd(), POLLIN, 0};
    const int rc = ::poll(&p, 1, timeout_ms);
    detail::check(rc, "poll");
    if (rc == 0) return std::nullopt;
    std::vector<std::uint8_t> buf(512);
    const auto n = ::recv(sock_.fd(), buf.data(), buf.size(), 0);
    detail::check(static_cast<int>(n), "recv");
    buf.resize(static_cast<std::size_t>(n));
    return buf;
  }

 private:
  detail::Socket sock_;
};

}  // namespace qctl
