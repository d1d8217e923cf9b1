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

// Transient, tracking and runtime statistics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "qctl/error.hpp"
#include "qctl/sysid.hpp"
#include "qctl/trace.hpp"

namespace qctl {

inline constexpr double kNotSettled = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kDefaultSmoothing = 10;

/// Time from `t_step` until the smoothed output stays inside
/// ref +- band*ref. `t`/`y` hold the post-step samples only. Returns
/// kNotSettled when the last sample is still outside the band.
inline double settling_time(std::span<const double> t, std::span<const double> y, double t_step,
                            double ref, double band = 0.05,
                            std::size_t smoothing = kDefaultSmoothing) {
  if (t.size() != y.size()) throw InvalidArgument("settling_time: t and y differ in length");
  if (y.empty()) throw InvalidArgument("settling_time: empty series");
  if (!(band > 0.0)) throw InvalidArgument("settling_time: band must be > 0");
  const auto ys = rolling_mean(y, smoothing);
  const double tol = band * std::abs(ref);
  std::ptrdiff_t last_out = -1;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (!(std::abs(ys[i] - ref) <= tol)) last_out = static_cast<std::ptrdiff_t>(i);
  }
  if (last_out < 0) return 0.0;
  if (static_cast<std::size_t>(last_out) + 1 == ys.size()) return kNotSettled;
  return t[static_cast<std::size_t>(last_out) + 1] - t_step;
}

/// Peak excursion past the reference as a fraction of it, in the
/// direction of the step (prev_ref -> ref).
inline double overshoot(std::span<const double> y, double ref, double prev_ref,
                        std::size_t smoothing = kDefaultSmoothing) {
  if (y.empty()) throw InvalidArgument("overshoot: empty series");
  if (!(ref > 0.0)) throw InvalidArgument("overshoot: ref must be > 0");
  const auto ys = rolling_mean(y, smoothing);
  if (ref >= prev_ref) {
    return std::max(0.0, (*std::max_element(ys.begin(), ys.end()) - ref) / ref);
  }
  return std::max(0.0, (ref - *std::min_element(ys.begin(), ys.end())) / ref);
}

struct PerfStats {
  double mean = 0.0;
  double p10 = 0.0;
  double p90 = 0.0;
  double tail = 0.0;
};

/// Nearest rank: the value at 1-based rank ceil(p/100 * N).
inline double nearest_rank(std::vector<double> sorted_or_not, double p) {
  if (sorted_or_not.empty()) throw InvalidArgument("percentile of an empty set");
  std::sort(sorted_or_not.begin(), sorted_or_not.end());
  const auto n = static_cast<double>(sorted_or_not.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted_or_not.size());
  return sorted_or_not[rank - 1];
}

inline PerfStats perf_metrics(std::span<const double> runtimes) {
  if (runtimes.empty()) throw InvalidArgument("perf_metrics: no runtimes");
  std::vector<double> v(runtimes.begin(), runtimes.end());
  PerfStats s;
  // Summing the sorted values keeps the mean independent of input order.
  std::sort(v.begin(), v.end());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.p10 = nearest_rank(v, 10);
  s.p90 = nearest_rank(v, 90);
  s.tail = v.back();
  return s;
}

inline double mean(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("mean of an empty set");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Population standard deviation.
inline double stddev(std::span<const double> v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

struct SegmentStats {
  double target = 0.0;
  double prev_target = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;
  double mean_q = 0.0;
  double std_q = 0.0;
  /// |mean_q - target| / target
  double ss_error = 0.0;
  double settling_s = 0.0;
  double overshoot = 0.0;
};

/// Splits a control trace at every target change. Mean and std skip the
/// first `settle_skip_s` of each segment; settling and overshoot use the
/// whole segment. The first segment's step is taken from q = 0.
inline std::vector<SegmentStats> segment_stats(const Trace& trace, double settle_skip_s,
                                               std::size_t smoothing = kDefaultSmoothing) {
  std::vector<SegmentStats> out;
  const auto& s = trace.samples;
  std::size_t begin = 0;
  double prev = 0.0;
  while (begin < s.size()) {
    std::size_t end = begin;
    while (end < s.size() && s[end].target == s[begin].target) ++end;
    SegmentStats seg;
    seg.target = s[begin].target;
    seg.prev_target = prev;
    seg.t_start = s[begin].t;
    seg.t_end = s[end - 1].t;
    std::vector<double> t, y, steady;
    for (std::size_t i = begin; i < end; ++i) {
      t.push_back(s[i].t);
      y.push_back(s[i].q);
      if (s[i].t - seg.t_start >= settle_skip_s) steady.push_back(s[i].q);
    }
    if (steady.empty()) steady = y;
    seg.mean_q = mean(steady);
    seg.std_q = stddev(steady);
    seg.ss_error = seg.target > 0.0 ? std::abs(seg.mean_q - seg.target) / seg.target
                                    : std::abs(seg.mean_q);
    // The new target first acts on the action emitted at t_start.
    seg.settling_s = settling_time(t, y, seg.t_start, seg.target, 0.05, smoothing);
    seg.overshoot = seg.target > 0.0 ? overshoot(y, seg.target, prev, smoothing) : 0.0;
    out.push_back(seg);
    prev = seg.target;
    begin = end;
  }
  return out;
}

}  // namespace qctl
