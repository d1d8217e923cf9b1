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

// Control-plane datagram. 29 bytes, integers big-endian:
//
//   0  4  magic "QCTL"
//   4  1  version (1)
//   5  8  seq
//  13  8  bandwidth, bits/s
//  21  8  timestamp, Unix epoch ms

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "qctl/error.hpp"
#include "qctl/io.hpp"

namespace qctl {

inline constexpr std::size_t kWireSize = 29;
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::uint64_t kMinBandwidthBits = 125'000;
inline constexpr std::array<std::uint8_t, 4> kMagic{'Q', 'C', 'T', 'L'};

using WireBytes = std::array<std::uint8_t, kWireSize>;

struct ControlMessage {
  std::uint8_t version = kProtocolVersion;
  std::uint64_t seq = 0;
  std::uint64_t bw_bits_per_s = 0;
  std::uint64_t timestamp_ms = 0;

  bool operator==(const ControlMessage&) const = default;
};

class DecodeError : public Error {
 public:
  enum class Kind { kTruncated, kForeign, kVersion };
  DecodeError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

inline void put_u64(std::uint8_t* p, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) {
    p[i] = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
}

inline std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

inline WireBytes encode_msg(const ControlMessage& m) {
  if (m.version != kProtocolVersion) throw InvalidArgument("encode: unsupported version");
  if (m.bw_bits_per_s < kMinBandwidthBits) {
    throw InvalidArgument("encode: bandwidth below the 125000 bit/s floor");
  }
  WireBytes out{};
  std::copy(kMagic.begin(), kMagic.end(), out.begin());
  out[4] = m.version;
  detail::put_u64(out.data() + 5, m.seq);
  detail::put_u64(out.data() + 13, m.bw_bits_per_s);
  detail::put_u64(out.data() + 21, m.timestamp_ms);
  return out;
}

inline ControlMessage decode_msg(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kWireSize) {
    throw DecodeError(DecodeError::Kind::kTruncated,
                      "decode: expected 29 bytes, got " + std::to_string(bytes.size()));
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw DecodeError(DecodeError::Kind::kForeign, "decode: foreign datagram (bad magic)");
  }
  if (bytes[4] != kProtocolVersion) {
    throw DecodeError(DecodeError::Kind::kVersion,
                      "decode: unsupported version " + std::to_string(bytes[4]));
  }
  ControlMessage m;
  m.version = bytes[4];
  m.seq = detail::get_u64(bytes.data() + 5);
  m.bw_bits_per_s = detail::get_u64(bytes.data() + 13);
  m.timestamp_ms = detail::get_u64(bytes.data() + 21);
  return m;
}

inline std::uint64_t mbit_to_bits(double bw_mbit) {
  const double bits = std::round(bw_mbit * 1e6);
  return bits < static_cast<double>(kMinBandwidthBits) ? kMinBandwidthBits
                                                       : static_cast<std::uint64_t>(bits);
}

struct ReceiverState {
  std::optional<std::uint64_t> last_seq;
  std::optional<std::uint64_t> last_applied_bw;
  std::size_t apply_count = 0;
  std::size_t stale_count = 0;
  std::size_t decode_error_count = 0;
  std::size_t failure_count = 0;
};

/// Last writer wins by seq: older or duplicate messages never re-shape.
inline void receiver_apply(ReceiverState& st, const ControlMessage& msg, Actuator& actuator) {
  if (st.last_seq && msg.seq <= *st.last_seq) {
    ++st.stale_count;
    return;
  }
  try {
    actuator.apply(static_cast<double>(msg.bw_bits_per_s) / 1e6);
  } catch (const std::exception&) {
    ++st.failure_count;
    return;
  }
  st.last_seq = msg.seq;
  st.last_applied_bw = msg.bw_bits_per_s;
  ++st.apply_count;
}

/// Decode-then-apply for one raw datagram; malformed input is counted.
inline void receiver_handle(ReceiverState& st, std::span<const std::uint8_t> datagram,
                            Actuator& actuator) {
  ControlMessage msg;
  try {
    msg = decode_msg(datagram);
  } catch (const DecodeError&) {
    ++st.decode_error_count;
    return;
  }
  receiver_apply(st, msg, actuator);
}

/// Controller-side actuator: every apply() becomes one datagram with the
/// next seq.
class ActionPublisher final : public Actuator {
 public:
  using Transport = std::function<void(const WireBytes&)>;
  using EpochMs = std::function<std::uint64_t()>;

  ActionPublisher(Transport send, EpochMs epoch_ms, std::uint64_t first_seq = 1)
      : send_(std::move(send)), epoch_ms_(std::move(epoch_ms)), next_seq_(first_seq) {}

  void apply(double bw_mbit) override {
    ControlMessage m;
    m.seq = next_seq_;
    m.bw_bits_per_s = mbit_to_bits(bw_mbit);
    m.timestamp_ms = epoch_ms_ ? epoch_ms_() : 0;
    send_(encode_msg(m));
    ++next_seq_;
  }

  std::uint64_t next_seq() const noexcept { return next_seq_; }

 private:
  Transport send_;
  EpochMs epoch_ms_;
  std::uint64_t next_seq_;
};

}  // namespace qctl
