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

// First-order queue model, PI tuning by pole placement, and closed-loop
// pole analysis.
//
// Model:       q(k+1) = a q(k) + b bw(k)
// Controller:  bw(k)  = kp e(k) + ki ts sum_{j<=k} e(j)
//
// Integral convention. The pole-placement map returns the integral gain
// per sample, i.e. the coefficient of sum e(j) with no ts factor. The
// runtime controller multiplies its integral gain by ts, so the gain it
// must be given is Ki / ts (see TuningResult::gains_for_period). Feeding
// the per-sample Ki straight into the ts-weighted law moves the poles off
// the design circle: for a=0.8, b=0.05, ts=0.3 they land at 0.797 and
// 0.226 instead of r=0.424.

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "qctl/error.hpp"

namespace qctl {

/// Identified plant. `b` is requests per Mbit/s, `ts` is seconds.
struct FirstOrderModel {
  double a = 0.0;
  double b = 0.0;
  double ts = 0.3;

  /// Open-loop stable queue relaxation (|a| < 1).
  bool stable() const noexcept { return std::abs(a) < 1.0; }
};

/// Closed-loop targets: settling time in seconds and overshoot fraction.
struct DesignSpec {
  double settling_time_s = 1.4;
  double overshoot = 0.02;
};

struct PiGains {
  double kp = 0.0;
  double ki = 0.0;
};

struct TuningResult {
  /// kp and the per-sample integral gain exactly as the tuning map yields.
  PiGains gains;
  double r = 0.0;
  double theta = 0.0;
  double ts = 0.0;

  /// Gains for the ts-weighted runtime law at sampling period `period`.
  /// Keeps the per-sample controller unchanged, so it is also how the
  /// "same controller" is run at a different period.
  PiGains gains_for_period(double period) const {
    if (!(period > 0.0)) {
      throw InvalidArgument("sampling period must be > 0");
    }
    return {gains.kp, gains.ki / period};
  }
  PiGains runtime_gains() const { return gains_for_period(ts); }
};

inline void validate(const FirstOrderModel& m) {
  if (!(m.ts > 0.0) || !std::isfinite(m.ts)) {
    throw InvalidArgument("model invariant violated: ts > 0");
  }
  if (m.b == 0.0 || !std::isfinite(m.b)) {
    throw InvalidArgument("model invariant violated: b != 0");
  }
  if (!std::isfinite(m.a)) {
    throw InvalidArgument("model invariant violated: a finite");
  }
}

inline void validate(const DesignSpec& s) {
  if (!(s.settling_time_s > 0.0) || !std::isfinite(s.settling_time_s)) {
    throw InvalidArgument("design invariant violated: settling_time_s > 0");
  }
  if (!(s.overshoot > 0.0 && s.overshoot < 1.0)) {
    throw InvalidArgument("design invariant violated: 0 < overshoot < 1");
  }
}

inline void validate(const PiGains& g) {
  if (!std::isfinite(g.kp) || !std::isfinite(g.ki)) {
    throw InvalidArgument("gains invariant violated: kp, ki finite");
  }
}

/// Maps (settling time, overshoot) to PI gains placing the closed-loop
/// poles at r e^{+-i theta}.
inline TuningResult tune_pi(const FirstOrderModel& model, const DesignSpec& spec) {
  validate(model);
  validate(spec);
  if (!model.stable()) {
    throw InvalidArgument(
        "model invariant violated: |a| < 1 (re-run identification)");
  }
  TuningResult out;
  out.ts = model.ts;
  out.r = std::exp(-4.0 * model.ts / spec.settling_time_s);
  out.theta = std::numbers::pi * std::log(out.r) / std::log(spec.overshoot);
  const double r2 = out.r * out.r;
  out.gains.kp = (model.a - r2) / model.b;
  out.gains.ki = (1.0 - 2.0 * out.r * std::cos(out.theta) + r2) / model.b;
  return out;
}

inline double predict_step(const FirstOrderModel& model, double q, double bw) noexcept {
  return model.a * q + model.b * bw;
}

/// Eigenvalues of the loop formed by the model and the ts-weighted PI law
/// (runtime gains) with a constant reference. State is (q, S) where S is
/// the integral accumulator ts * sum of past errors:
///
///   q(k+1) = (a - b (kp + ki ts)) q(k) + b ki S(k)
///   S(k+1) = -ts q(k) + S(k)
inline std::array<std::complex<double>, 2> closed_loop_poles(
    const FirstOrderModel& model, const PiGains& runtime) {
  validate(model);
  Eigen::Matrix2d m;
  m << model.a - model.b * (runtime.kp + runtime.ki * model.ts), model.b * runtime.ki,
      -model.ts, 1.0;
  Eigen::EigenSolver<Eigen::Matrix2d> solver(m, /*computeEigenvectors=*/false);
  const auto ev = solver.eigenvalues();
  return {ev(0), ev(1)};
}

// Model document: {a, b, ts_s, kp, ki, r, theta, spec: {ks_s, mp}}.
// kp/ki are the tuning-map values (ki per sample).

struct ModelDocument {
  FirstOrderModel model;
  DesignSpec spec;
  TuningResult tuning;
};

inline nlohmann::json to_json(const ModelDocument& doc) {
  return nlohmann::json{{"a", doc.model.a},
                        {"b", doc.model.b},
                        {"ts_s", doc.model.ts},
                        {"kp", doc.tuning.gains.kp},
                        {"ki", doc.tuning.gains.ki},
                        {"r", doc.tuning.r},
                        {"theta", doc.tuning.theta},
                        {"spec",
                         {{"ks_s", doc.spec.settling_time_s},
                          {"mp", doc.spec.overshoot}}}};
}

inline ModelDocument model_document_from_json(const nlohmann::json& j) {
  ModelDocument doc;
  try {
    doc.model.a = j.at("a").get<double>();
    doc.model.b = j.at("b").get<double>();
    doc.model.ts = j.at("ts_s").get<double>();
    doc.spec.settling_time_s = j.at("spec").at("ks_s").get<double>();
    doc.spec.overshoot = j.at("spec").at("mp").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("model document: ") + e.what());
  }
  // Gains are always re-derived so a hand-edited document cannot drift
  // from its own model.
  doc.tuning = tune_pi(doc.model, doc.spec);
  return doc;
}

inline ModelDocument make_model_document(const FirstOrderModel& model,
                                         const DesignSpec& spec) {
  return {model, spec, tune_pi(model, spec)};
}

}  // namespace qctl
