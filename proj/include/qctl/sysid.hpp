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

// Open-loop identification: staircase excitation, Savitzky-Golay
// smoothing, saturation exclusion and a least-squares fit of
// q(k+1) = a q(k) + b bw(k).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qctl/error.hpp"
#include "qctl/io.hpp"
#include "qctl/model.hpp"
#include "qctl/trace.hpp"

namespace qctl {

/// Convolution weights of the centred least-squares polynomial smoother.
inline std::vector<double> savgol_coefficients(int window, int polyorder) {
  if (window <= 0 || window % 2 == 0) {
    throw InvalidArgument("savgol: window must be a positive odd integer");
  }
  if (polyorder < 0 || polyorder >= window) {
    throw InvalidArgument("savgol: require 0 <= polyorder < window");
  }
  const int half = window / 2;
  Eigen::MatrixXd design(window, polyorder + 1);
  for (int j = 0; j < window; ++j) {
    double x = 1.0;
    for (int p = 0; p <= polyorder; ++p) {
      design(j, p) = x;
      x *= static_cast<double>(j - half);
    }
  }
  const Eigen::MatrixXd pinv = design.completeOrthogonalDecomposition().pseudoInverse();
  std::vector<double> coeffs(window);
  for (int j = 0; j < window; ++j) coeffs[j] = pinv(0, j);
  return coeffs;
}

/// Savitzky-Golay smoothing with mirror padding at the edges
/// (x[-i] = x[i], x[n-1+i] = x[n-1-i]).
inline std::vector<double> savgol_filter(std::span<const double> series, int window,
                                         int polyorder) {
  const auto coeffs = savgol_coefficients(window, polyorder);
  const auto n = static_cast<long>(series.size());
  if (n < window) throw InvalidArgument("savgol: series shorter than window");
  const long half = window / 2;
  auto at = [&](long i) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return series[static_cast<std::size_t>(i)];
  };
  std::vector<double> out(series.size());
  for (long i = 0; i < n; ++i) {
    double acc = 0.0;
    for (long j = -half; j <= half; ++j) acc += coeffs[static_cast<std::size_t>(j + half)] * at(i + j);
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

/// Trailing moving average; the first window-1 points average what exists.
/// Used for plotting and transient metrics, never for fitting.
inline std::vector<double> rolling_mean(std::span<const double> series, std::size_t window) {
  if (window == 0) throw InvalidArgument("rolling_mean: window must be >= 1");
  std::vector<double> out(series.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    acc += series[i];
    if (i >= window) acc -= series[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

/// Drops rows where the queue is empty (q <= eps) or saturated
/// (q >= q_max - eps). Timestamps are kept so the fit can skip pairs that
/// straddle a hole.
inline Trace exclude_saturation(const Trace& trace, double q_max, double eps) {
  if (!(q_max > 0.0)) throw InvalidArgument("exclude_saturation: q_max must be > 0");
  if (!(eps >= 0.0 && eps < q_max / 2.0)) {
    throw InvalidArgument("exclude_saturation: require 0 <= eps < q_max/2");
  }
  Trace out;
  out.ts = trace.ts;
  out.meta = trace.meta;
  out.control_columns = trace.control_columns;
  for (const auto& s : trace.samples) {
    if (s.q > eps && s.q < q_max - eps) out.samples.push_back(s);
  }
  if (out.empty()) {
    throw IdentificationInfeasible(
        "every sample is empty or saturated; no queue dynamics to identify");
  }
  return out;
}

struct FitResult {
  FirstOrderModel model;
  double r_squared = 0.0;
  double residual_std = 0.0;
  std::size_t pairs = 0;
  /// |a| >= 1: reported, but tune_pi will refuse the model.
  bool unstable_warning = false;
};

inline constexpr std::size_t kMinFitPairs = 30;

/// Least-squares fit over consecutive rows whose gap is one nominal period.
inline FitResult fit_first_order(const Trace& trace) {
  if (!(trace.ts > 0.0)) throw InvalidArgument("fit: trace ts must be > 0");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i + 1 < trace.samples.size(); ++i) {
    if (gap_is_nominal(trace.samples[i + 1].t - trace.samples[i].t, trace.ts)) idx.push_back(i);
  }
  if (idx.size() < kMinFitPairs) {
    throw IdentificationInfeasible("fit: need at least " + std::to_string(kMinFitPairs) +
                                   " consecutive sample pairs, have " +
                                   std::to_string(idx.size()));
  }
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = idx[static_cast<std::size_t>(r)];
    x(r, 0) = trace.samples[i].q;
    x(r, 1) = trace.samples[i].bw;
    y(r) = trace.samples[i + 1].q;
  }
  auto spread = [](const Eigen::VectorXd& v) { return v.maxCoeff() - v.minCoeff(); };
  const double bw_scale = std::max(1.0, x.col(1).cwiseAbs().maxCoeff());
  if (spread(x.col(1)) <= 1e-12 * bw_scale) {
    throw RankDeficient(
        "fit: bandwidth input never varies; b is unidentifiable without input excitation");
  }
  const double q_scale = std::max(1.0, x.col(0).cwiseAbs().maxCoeff());
  if (spread(x.col(0)) <= 1e-12 * q_scale) {
    throw RankDeficient("fit: queue size never varies; a is unidentifiable without state excitation");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < 2) {
    throw RankDeficient("fit: queue and bandwidth regressors are collinear");
  }
  const Eigen::Vector2d theta = qr.solve(y);

  FitResult out;
  out.model = {theta(0), theta(1), trace.ts};
  out.pairs = idx.size();
  const Eigen::VectorXd resid = y - x * theta;
  const double ss_res = resid.squaredNorm();
  const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
  out.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  out.residual_std = std::sqrt(ss_res / static_cast<double>(std::max<Eigen::Index>(n - 2, 1)));
  out.unstable_warning = !out.model.stable();
  return out;
}

struct StaircaseSchedule {
  std::vector<double> levels;  // Mbit/s
  double hold_s = 9.0;

  std::size_t ticks_per_level(double ts) const {
    return static_cast<std::size_t>(std::llround(hold_s / ts));
  }
};

inline void validate(const StaircaseSchedule& s, double ts) {
  if (s.levels.empty()) throw InvalidArgument("staircase: levels must be non-empty");
  if (!(ts > 0.0)) throw InvalidArgument("staircase: ts must be > 0");
  if (s.hold_s < 10.0 * ts - 1e-9) {
    throw InvalidArgument("staircase: hold_s must be >= 10 * ts");
  }
  for (double l : s.levels) {
    if (!(l >= 0.0)) throw InvalidArgument("staircase: levels must be >= 0");
  }
}

struct StaircaseRun {
  Trace trace;
  /// Set when the sensor or actuator failed; the trace is partial and is
  /// not meant to be fitted.
  std::optional<std::string> error;
};

/// Holds each level for hold_s, sampling every ts. Row k carries the
/// reading taken at t_k and the level applied from t_k on.
inline StaircaseRun run_staircase(Sensor& sensor, Actuator& actuator, Clock& clock,
                                  const StaircaseSchedule& schedule, double ts) {
  validate(schedule, ts);
  StaircaseRun run;
  run.trace.ts = ts;
  auto& meta = run.trace.meta;
  meta["experiment"] = "staircase";
  meta["levels_mbit"] = schedule.levels;
  meta["hold_s"] = schedule.hold_s;
  meta["level_change_t_s"] = nlohmann::json::array();

  auto fail = [&](const std::string& why) {
    run.error = why;
    meta["partial"] = true;
    meta["error"] = why;
    return run;
  };

  const double t0 = clock.now();
  try {
    actuator.apply(schedule.levels.front());
  } catch (const std::exception& e) {
    return fail(std::string("actuator: ") + e.what());
  }
  const std::size_t per_level = schedule.ticks_per_level(ts);
  std::size_t k = 0;
  for (std::size_t li = 0; li < schedule.levels.size(); ++li) {
    const double level = schedule.levels[li];
    for (std::size_t j = 0; j < per_level; ++j, ++k) {
      const double t = t0 + static_cast<double>(k + 1) * ts;
      clock.sleep_until(t);
      const auto q = sensor.read();
      if (!q) return fail("sensor: unusable reading at t=" + format_number(t));
      try {
        actuator.apply(level);
      } catch (const std::exception& e) {
        return fail(std::string("actuator: ") + e.what());
      }
      if (j == 0) meta["level_change_t_s"].push_back(t);
      run.trace.samples.push_back({t, level, *q});
    }
  }
  meta["partial"] = false;
  return run;
}

struct PlateauMean {
  double bw = 0.0;
  double mean_q = 0.0;
  std::size_t samples = 0;
};

/// Mean of the second half of every constant-bandwidth plateau: the
/// static (bandwidth -> queue size) map.
inline std::vector<PlateauMean> plateau_means(const Trace& trace) {
  std::vector<PlateauMean> out;
  std::size_t begin = 0;
  const auto& s = trace.samples;
  while (begin < s.size()) {
    std::size_t end = begin;
    while (end < s.size() && s[end].bw == s[begin].bw) ++end;
    const std::size_t from = begin + (end - begin) / 2;
    PlateauMean p{s[begin].bw, 0.0, end - from};
    for (std::size_t i = from; i < end; ++i) p.mean_q += s[i].q;
    p.mean_q /= static_cast<double>(p.samples);
    out.push_back(p);
    begin = end;
  }
  return out;
}

struct IdentOptions {
  int savgol_window = 5;
  int savgol_polyorder = 2;
  double q_max = 128.0;
  double eps = 2.0;
};

struct Identification {
  FitResult fit;
  Trace filtered;
  Trace used;
};

/// Filter, exclude empty/saturated samples, fit.
inline Identification identify(const Trace& raw, const IdentOptions& opt = {}) {
  validate(raw);
  Identification out;
  out.filtered = raw;
  const auto q = raw.q_values();
  const auto smooth = savgol_filter(q, opt.savgol_window, opt.savgol_polyorder);
  for (std::size_t i = 0; i < smooth.size(); ++i) out.filtered.samples[i].q = smooth[i];
  out.used = exclude_saturation(out.filtered, opt.q_max, opt.eps);
  out.fit = fit_first_order(out.used);
  return out;
}

}  // namespace qctl
