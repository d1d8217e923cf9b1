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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <iterator>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qctl/error.hpp"
#include "qctl/io.hpp"
#include "qctl/model.hpp"
#include "qctl/trace.hpp"

namespace qctl {

/// Token-bucket shaping rejects rates below 1 Mbit/8.
inline constexpr double kMinBandwidthMbit = 0.125;

struct OutputLimits {
  double min = kMinBandwidthMbit;
  double max = 10000.0;
};

inline void validate(const OutputLimits& l) {
  if (!(l.min >= kMinBandwidthMbit) || !(l.min < l.max)) {
    throw InvalidArgument("controller invariant violated: 0.125 <= bw_min < bw_max");
  }
}

/// Discrete PI law with conditional-integration anti-windup:
///   e = ref - q,  raw = kp e + ki (I + ts e),  out = clamp(raw)
/// and I += ts e only when raw was inside the limits.
/// `gains` are runtime gains (see TuningResult::gains_for_period).
class PiController {
 public:
  PiController(PiGains gains, double ts, double reference, OutputLimits limits = {})
      : gains_(gains), ts_(ts), reference_(reference), limits_(limits),
        last_output_(limits.max) {
    validate(gains_);
    validate(limits_);
    if (!(ts_ > 0.0)) throw InvalidArgument("controller invariant violated: ts > 0");
  }

  /// One tick. A NaN measurement re-emits the previous action.
  double step(double measured_q) {
    if (std::isnan(measured_q)) {
      ++incidents_;
      return last_output_;
    }
    if (measured_q < 0.0) throw InvalidArgument("pi_step: measured_q must be >= 0");
    const double e = reference_ - measured_q;
    last_raw_ = gains_.kp * e + gains_.ki * (integral_ + ts_ * e);
    if (last_raw_ >= limits_.min && last_raw_ <= limits_.max) integral_ += ts_ * e;
    last_output_ = std::clamp(last_raw_, limits_.min, limits_.max);
    return last_output_;
  }

  void set_reference(double ref) noexcept { reference_ = ref; }
  double reference() const noexcept { return reference_; }
  double integral() const noexcept { return integral_; }
  /// Seeds the accumulator, e.g. to start a test loop in steady state.
  void set_integral(double v) noexcept { integral_ = v; }
  double last_output() const noexcept { return last_output_; }
  double last_raw() const noexcept { return last_raw_; }
  std::size_t incidents() const noexcept { return incidents_; }
  const PiGains& gains() const noexcept { return gains_; }
  double ts() const noexcept { return ts_; }
  const OutputLimits& limits() const noexcept { return limits_; }

 private:
  PiGains gains_;
  double ts_;
  double reference_;
  OutputLimits limits_;
  double integral_ = 0.0;
  double last_output_;
  double last_raw_ = std::numeric_limits<double>::quiet_NaN();
  std::size_t incidents_ = 0;
};

/// Piecewise-constant target: entry i holds from its time until the next.
class ReferenceSchedule {
 public:
  ReferenceSchedule() = default;
  explicit ReferenceSchedule(std::vector<std::pair<double, double>> steps)
      : steps_(std::move(steps)) {
    if (steps_.empty()) throw InvalidArgument("reference schedule is empty");
    for (std::size_t i = 1; i < steps_.size(); ++i) {
      if (!(steps_[i].first > steps_[i - 1].first)) {
        throw InvalidArgument("reference schedule times must increase");
      }
    }
    for (const auto& [t, r] : steps_) {
      if (!(r >= 0.0) || !std::isfinite(t)) {
        throw InvalidArgument("reference schedule: bad entry");
      }
    }
  }

  /// Equal-length segments starting at t=0.
  static ReferenceSchedule segments(const std::vector<double>& targets, double seg_s) {
    std::vector<std::pair<double, double>> s;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      s.emplace_back(static_cast<double>(i) * seg_s, targets[i]);
    }
    return ReferenceSchedule(std::move(s));
  }

  static ReferenceSchedule read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InvalidArgument("schedule csv: empty");
    const auto header = detail::split_csv_line(line);
    if (header.size() != 2 || header[0] != "t_s" || header[1] != "target_requests") {
      throw InvalidArgument("schedule csv: header must be t_s,target_requests");
    }
    std::vector<std::pair<double, double>> s;
    std::size_t n = 1;
    while (std::getline(is, line)) {
      ++n;
      if (line.empty()) continue;
      const auto f = detail::split_csv_line(line);
      if (f.size() != 2) throw InvalidArgument("schedule csv: bad line " + std::to_string(n));
      s.emplace_back(detail::parse_double(f[0], n), detail::parse_double(f[1], n));
    }
    return ReferenceSchedule(std::move(s));
  }

  double at(double t) const {
    if (steps_.empty() || t < steps_.front().first) {
      throw InvalidArgument("reference schedule does not cover t=" + format_number(t));
    }
    auto it = std::upper_bound(steps_.begin(), steps_.end(), t,
                               [](double v, const auto& s) { return v < s.first; });
    return std::prev(it)->second;
  }

  const std::vector<std::pair<double, double>>& steps() const noexcept { return steps_; }

 private:
  std::vector<std::pair<double, double>> steps_;
};

struct ControlRun {
  Trace trace;
  std::size_t ticks = 0;
  std::size_t skipped = 0;
  bool failed = false;
  std::optional<std::string> error;
};

/// Fraction of skipped ticks above which a run is marked failed.
inline constexpr double kMaxSkippedFraction = 0.10;

/// Runs the loop for `duration_s`. Before the first measurement the
/// actuator holds bw_max. Tick k happens at t0 + (k+1) ts: read, step,
/// apply. A missing reading, or one that took more than ts/2, skips the
/// tick and re-emits the previous action; skipped ticks leave no row.
inline ControlRun run_control_loop(PiController& ctrl, Sensor& sensor, Actuator& actuator,
                                   Clock& clock, const ReferenceSchedule& schedule,
                                   double duration_s) {
  if (!(duration_s > 0.0)) throw InvalidArgument("control loop: duration must be > 0");
  const double ts = ctrl.ts();
  ControlRun run;
  run.trace.ts = ts;
  run.trace.control_columns = true;
  run.trace.meta["experiment"] = "control";

  const double t0 = clock.now();
  const auto ticks = static_cast<std::size_t>(std::llround(duration_s / ts));
  auto emit = [&](double bw) -> bool {
    try {
      actuator.apply(bw);
      return true;
    } catch (const std::exception& e) {
      run.error = std::string("actuator: ") + e.what();
      return false;
    }
  };
  if (!emit(ctrl.last_output())) {
    run.failed = true;
    return run;
  }
  for (std::size_t k = 0; k < ticks; ++k) {
    const double rel = static_cast<double>(k + 1) * ts;
    clock.sleep_until(t0 + rel);
    ctrl.set_reference(schedule.at(rel));
    const double before = clock.now();
    const auto q = sensor.read();
    const bool late = clock.now() - before > 0.5 * ts;
    ++run.ticks;
    if (!q || late || std::isnan(*q)) {
      ++run.skipped;
      if (!emit(ctrl.last_output())) break;
      continue;
    }
    const double bw = ctrl.step(std::max(0.0, *q));
    if (!emit(bw)) break;
    run.trace.samples.push_back({rel, bw, *q, ctrl.reference(), ctrl.last_raw()});
  }
  run.failed = run.error.has_value() ||
               static_cast<double>(run.skipped) > kMaxSkippedFraction * static_cast<double>(ticks);
  run.trace.meta["skipped_ticks"] = run.skipped;
  run.trace.meta["incidents"] = ctrl.incidents();
  if (run.error) run.trace.meta["error"] = *run.error;
  return run;
}

}  // namespace qctl
