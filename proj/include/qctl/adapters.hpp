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

// Live backends: block-device stat parsing for the sensor and
// token-bucket shaper commands for the actuator.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qctl/controller.hpp"
#include "qctl/error.hpp"
#include "qctl/io.hpp"

namespace qctl {

/// One line of /sys/block/<dev>/stat. Field order (0-based): read I/Os,
/// read merges, read sectors, read ticks, write I/Os, write merges, write
/// sectors, write ticks, in flight, io ticks, time in queue; then 4
/// discard and 2 flush counters on newer kernels.
struct BlockStat {
  std::array<std::uint64_t, 17> fields{};
  std::size_t count = 11;

  std::uint64_t in_flight() const noexcept { return fields[8]; }
  std::uint64_t io_ticks_ms() const noexcept { return fields[9]; }
  std::uint64_t time_in_queue_ms() const noexcept { return fields[10]; }

  bool operator==(const BlockStat&) const = default;
};

inline BlockStat parse_block_stat(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  if (tokens.size() != 11 && tokens.size() != 15 && tokens.size() != 17) {
    throw ParseError("block stat: expected 11, 15 or 17 fields, got " +
                         std::to_string(tokens.size()),
                     std::string(line));
  }
  BlockStat st;
  st.count = tokens.size();
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const auto tok = tokens[k];
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), st.fields[k]);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
      throw ParseError("block stat: non-numeric field " + std::to_string(k + 1) + ": '" +
                           std::string(tok) + "'",
                       std::string(tok));
    }
  }
  return st;
}

/// The 11 classic counters, space separated.
inline std::string format_block_stat(const BlockStat& st) {
  std::string out;
  for (std::size_t k = 0; k < 11; ++k) {
    if (k) out += ' ';
    out += std::to_string(st.fields[k]);
  }
  return out;
}

/// Average queue size over the interval between two readings.
inline double estimate_queue(const BlockStat& prev, const BlockStat& curr, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("estimate_queue: dt must be > 0");
  if (curr.time_in_queue_ms() < prev.time_in_queue_ms()) {
    throw CounterWrap("time_in_queue went backwards (device reset or counter wrap)");
  }
  return static_cast<double>(curr.time_in_queue_ms() - prev.time_in_queue_ms()) / (dt * 1000.0);
}

struct ShaperOptions {
  std::uint64_t burst_bytes = 32 * 1024;
  int latency_ms = 400;
};

inline bool valid_interface_name(std::string_view iface) {
  static const std::regex re("[A-Za-z0-9._-]{1,15}");
  return std::regex_match(iface.begin(), iface.end(), re);
}

namespace detail {

/// %.3f with trailing zeros (and a bare point) stripped: 100 -> "100".
inline std::string trim_rate(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s(buf);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

inline std::string render_bytes(std::uint64_t b) {
  if (b % 1024 == 0) return std::to_string(b / 1024) + "kb";
  return std::to_string(b) + "b";
}

}  // namespace detail

inline std::string render_shaper_command(std::string_view iface, double bw_mbit,
                                         const ShaperOptions& opt = {}) {
  if (!valid_interface_name(iface)) {
    throw InvalidArgument("shaper: interface name must match [A-Za-z0-9._-]{1,15}");
  }
  if (!(bw_mbit >= kMinBandwidthMbit) || !std::isfinite(bw_mbit)) {
    throw InvalidArgument("shaper: rate below the 0.125 Mbit/s floor");
  }
  if (opt.burst_bytes == 0 || opt.latency_ms <= 0) {
    throw InvalidArgument("shaper: burst and latency must be positive");
  }
  return "tc qdisc replace dev " + std::string(iface) + " root tbf rate " +
         detail::trim_rate(bw_mbit) + "mbit burst " + detail::render_bytes(opt.burst_bytes) +
         " latency " + std::to_string(opt.latency_ms) + "ms";
}

/// Polls a block stat file; each read returns the average queue since
/// the previous one. The first read only primes the baseline.
class BlockStatSensor final : public Sensor {
 public:
  BlockStatSensor(std::filesystem::path path, Clock& clock)
      : path_(std::move(path)), clock_(clock) {}

  std::optional<double> read() override {
    std::ifstream in(path_);
    std::string line;
    if (!in || !std::getline(in, line)) return std::nullopt;
    BlockStat curr;
    try {
      curr = parse_block_stat(line);
    } catch (const ParseError&) {
      return std::nullopt;
    }
    const double t = clock_.now();
    std::optional<double> out;
    if (prev_) {
      try {
        out = estimate_queue(*prev_, curr, t - prev_t_);
      } catch (const Error&) {
        out.reset();
      }
    }
    prev_ = curr;
    prev_t_ = t;
    return out;
  }

 private:
  std::filesystem::path path_;
  Clock& clock_;
  std::optional<BlockStat> prev_;
  double prev_t_ = 0.0;
};

/// Renders shaper commands and hands them to an executor. Without an
/// executor (dry run) the command is only written to `log`.
class ShaperActuator final : public Actuator {
 public:
  /// Returns the command's exit status.
  using Executor = std::function<int(const std::string&)>;

  ShaperActuator(std::string iface, ShaperOptions opt, Executor exec, std::ostream* log)
      : iface_(std::move(iface)), opt_(opt), exec_(std::move(exec)), log_(log) {
    if (!valid_interface_name(iface_)) {
      throw InvalidArgument("shaper: interface name must match [A-Za-z0-9._-]{1,15}");
    }
  }

  void apply(double bw_mbit) override {
    const auto cmd = render_shaper_command(iface_, std::max(bw_mbit, kMinBandwidthMbit), opt_);
    if (log_) *log_ << cmd << '\n';
    if (exec_) {
      if (const int rc = exec_(cmd); rc != 0) {
        throw IoError("shaper command failed with status " + std::to_string(rc));
      }
    }
    last_command_ = cmd;
  }

  const std::string& last_command() const noexcept { return last_command_; }

 private:
  std::string iface_;
  ShaperOptions opt_;
  Executor exec_;
  std::ostream* log_;
  std::string last_command_;
};

}  // namespace qctl
