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

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qctl/error.hpp"

namespace qctl {

/// Row k: measurement q taken at t (average over the preceding period)
/// and the action bw applied from t until the next row. With this
/// alignment consecutive rows are exactly one step of q(k+1)=a q(k)+b bw(k).
struct Sample {
  double t = 0.0;
  double bw = 0.0;
  double q = 0.0;
  // Control runs only.
  double target = std::numeric_limits<double>::quiet_NaN();
  double raw = std::numeric_limits<double>::quiet_NaN();
};

struct Trace {
  std::vector<Sample> samples;
  double ts = 0.3;
  nlohmann::json meta = nlohmann::json::object();
  /// Emit `target_requests,raw_action_mbit_s` columns.
  bool control_columns = false;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  std::vector<double> q_values() const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.q);
    return out;
  }
  std::vector<double> times() const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.t);
    return out;
  }
};

/// Gap tolerance around the nominal period, as a fraction of ts.
inline constexpr double kGapTolerance = 0.2;

inline bool gap_is_nominal(double gap, double ts) noexcept {
  return std::abs(gap - ts) <= kGapTolerance * ts;
}

/// Checks the invariants of a contiguous (unfiltered) trace.
inline void validate(const Trace& trace) {
  if (!(trace.ts > 0.0)) throw InvalidArgument("trace invariant violated: ts > 0");
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    const auto& s = trace.samples[i];
    if (!(s.q >= 0.0) || !(s.bw >= 0.0)) {
      throw InvalidArgument("trace invariant violated: q >= 0 and bw >= 0 at row " +
                            std::to_string(i));
    }
    if (i > 0) {
      const double gap = s.t - trace.samples[i - 1].t;
      if (!(gap > 0.0) || !gap_is_nominal(gap, trace.ts)) {
        throw InvalidArgument("trace invariant violated: gap within 20% of ts at row " +
                              std::to_string(i));
      }
    }
  }
}

/// Fixed-format number rendering shared by every CSV writer so reruns are
/// byte-identical.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void write_trace_csv(std::ostream& os, const Trace& trace) {
  os << "t_s,bw_mbit_s,q_requests";
  if (trace.control_columns) os << ",target_requests,raw_action_mbit_s";
  os << '\n';
  for (const auto& s : trace.samples) {
    os << format_number(s.t) << ',' << format_number(s.bw) << ',' << format_number(s.q);
    if (trace.control_columns) {
      os << ',' << format_number(s.target) << ',' << format_number(s.raw);
    }
    os << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& tok, std::size_t line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("csv: bad number '" + tok + "' on line " + std::to_string(line_no));
  }
}

}  // namespace detail

/// Reads a trace CSV. Columns are located by header name; the extended
/// control columns are optional.
inline Trace read_trace_csv(std::istream& is, double ts) {
  Trace trace;
  trace.ts = ts;
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("csv: empty trace file");
  const auto header = detail::split_csv_line(line);
  auto col = [&](std::string_view name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int ct = col("t_s"), cb = col("bw_mbit_s"), cq = col("q_requests");
  const int cr = col("target_requests"), cw = col("raw_action_mbit_s");
  if (ct < 0 || cb < 0 || cq < 0) {
    throw InvalidArgument("csv: header must contain t_s,bw_mbit_s,q_requests");
  }
  trace.control_columns = cr >= 0 && cw >= 0;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size()) {
      throw InvalidArgument("csv: wrong field count on line " + std::to_string(line_no));
    }
    Sample s;
    s.t = detail::parse_double(f[ct], line_no);
    s.bw = detail::parse_double(f[cb], line_no);
    s.q = detail::parse_double(f[cq], line_no);
    if (trace.control_columns) {
      s.target = detail::parse_double(f[cr], line_no);
      s.raw = detail::parse_double(f[cw], line_no);
    }
    trace.samples.push_back(s);
  }
  return trace;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".meta.json");
  return p;
}

/// Writes `<path>` and its `<stem>.meta.json` sidecar (ts plus meta labels).
inline void save_trace(const std::filesystem::path& path, const Trace& trace) {
  std::ofstream csv(path);
  if (!csv) throw IoError("cannot write " + path.string());
  write_trace_csv(csv, trace);
  nlohmann::json side = {{"ts_s", trace.ts}, {"meta", trace.meta}};
  std::ofstream js(sidecar_path(path));
  if (!js) throw IoError("cannot write " + sidecar_path(path).string());
  js << side.dump(2) << '\n';
}

inline Trace load_trace(const std::filesystem::path& path) {
  double ts = 0.3;
  nlohmann::json meta = nlohmann::json::object();
  if (std::ifstream js(sidecar_path(path)); js) {
    auto side = nlohmann::json::parse(js);
    ts = side.value("ts_s", ts);
    meta = side.value("meta", meta);
  }
  std::ifstream csv(path);
  if (!csv) throw IoError("cannot read " + path.string());
  Trace t = read_trace_csv(csv, ts);
  t.meta = std::move(meta);
  return t;
}

}  // namespace qctl
