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

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "qctl/model.hpp"

namespace {

using namespace qctl;

// Roots of z^2 + c1 z + c0 by the quadratic formula; independent of the
// eigen-solver used by closed_loop_poles.
std::array<std::complex<double>, 2> quadratic_roots(double c1, double c0) {
  const std::complex<double> disc = std::sqrt(std::complex<double>(c1 * c1 - 4.0 * c0));
  return {(-c1 + disc) / 2.0, (-c1 - disc) / 2.0};
}

// Characteristic polynomial of the ts-weighted PI loop, expanded by hand:
// z^2 - (1 + a - b (kp + ki ts)) z + (a - b kp).
std::array<std::complex<double>, 2> oracle_poles(const FirstOrderModel& m, const PiGains& g) {
  return quadratic_roots(-(1.0 + m.a - m.b * (g.kp + g.ki * m.ts)), m.a - m.b * g.kp);
}

void expect_same_poles(std::array<std::complex<double>, 2> x, std::array<std::complex<double>, 2> y,
                       double tol) {
  auto key = [](std::complex<double> z) { return std::pair(z.real(), z.imag()); };
  auto cmp = [&](auto l, auto r) { return key(l) < key(r); };
  std::sort(x.begin(), x.end(), cmp);
  std::sort(y.begin(), y.end(), cmp);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(x[i].real(), y[i].real(), tol);
    EXPECT_NEAR(x[i].imag(), y[i].imag(), tol);
  }
}

TEST(TunePi, DesignIntermediatesAtDefaultSpec) {
  const auto t = tune_pi({0.8, 0.05, 0.3}, {1.4, 0.02});
  // Independent evaluation: exp(-0.857142857...) and pi*ln r / ln 0.02.
  EXPECT_NEAR(t.r, 0.42437, 1e-4);
  EXPECT_NEAR(t.theta, 0.68834, 1e-4);
  EXPECT_NEAR(t.r, std::exp(-6.0 / 7.0), 1e-15);
}

TEST(TunePi, GainsForReferenceModel) {
  const auto t = tune_pi({0.8, 0.05, 0.3}, {1.4, 0.02});
  EXPECT_NEAR(t.gains.kp, 12.398, 0.01);
  EXPECT_NEAR(t.gains.ki, 10.49, 0.05);
  // Long-double evaluation as a higher-precision cross-check.
  const long double r = std::exp(-4.0L * 0.3L / 1.4L);
  const long double th = std::numbers::pi_v<long double> * std::log(r) / std::log(0.02L);
  EXPECT_NEAR(t.gains.kp, static_cast<double>((0.8L - r * r) / 0.05L), 1e-12);
  EXPECT_NEAR(t.gains.ki, static_cast<double>((1.0L - 2.0L * r * std::cos(th) + r * r) / 0.05L),
              1e-12);
}

TEST(TunePi, KpVanishesWhenPoleEqualsRSquared) {
  const double r = std::exp(-4.0 * 0.3 / 1.4);
  const auto t = tune_pi({r * r, 1.0, 0.3}, {1.4, 0.02});
  EXPECT_NEAR(t.gains.kp, 0.0, 1e-15);
}

TEST(TunePi, RejectsInvalidInputsNamingTheInvariant) {
  auto msg = [](auto&& f) {
    try {
      f();
    } catch (const InvalidArgument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(msg([] { tune_pi({0.8, 0.0, 0.3}, {}); }).find("b != 0"), std::string::npos);
  EXPECT_NE(msg([] { tune_pi({0.8, 0.05, 0.0}, {}); }).find("ts > 0"), std::string::npos);
  EXPECT_NE(msg([] { tune_pi({1.0, 0.05, 0.3}, {}); }).find("|a| < 1"), std::string::npos);
  EXPECT_NE(msg([] { tune_pi({0.8, 0.05, 0.3}, {1.4, 1.0}); }).find("overshoot"),
            std::string::npos);
  EXPECT_NE(msg([] { tune_pi({0.8, 0.05, 0.3}, {0.0, 0.02}); }).find("settling_time_s"),
            std::string::npos);
}

TEST(TunePi, ScaleConsistentInB) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ua(-0.95, 0.95), ub(0.01, 5.0), uc(0.1, 10.0);
  for (int i = 0; i < 200; ++i) {
    const FirstOrderModel m{ua(rng), ub(rng), 0.3};
    const double c = uc(rng);
    const auto t1 = tune_pi(m, {});
    const auto t2 = tune_pi({m.a, m.b * c, m.ts}, {});
    EXPECT_NEAR(t2.gains.kp, t1.gains.kp / c, 1e-12 * std::max(1.0, std::abs(t1.gains.kp)));
    EXPECT_NEAR(t2.gains.ki, t1.gains.ki / c, 1e-12 * std::max(1.0, std::abs(t1.gains.ki)));
  }
}

TEST(TunePi, MonotoneAndInRange) {
  double prev_r = 1.0;
  for (double ratio = 0.05; ratio < 3.0; ratio += 0.05) {
    const auto t = tune_pi({0.5, 1.0, ratio}, {1.0, 0.02});
    EXPECT_LT(t.r, prev_r);
    EXPECT_GT(t.r, 0.0);
    EXPECT_LT(t.r, 1.0);
    EXPECT_GT(t.theta, 0.0);
    // The angle stays below pi only while ts < ks * |ln mp| / 4.
    if (ratio < 1.0 * std::abs(std::log(0.02)) / 4.0) {
      EXPECT_LT(t.theta, std::numbers::pi);
    }
    prev_r = t.r;
  }
  // More allowed overshoot means a wider pole angle.
  double prev_theta = 0.0;
  for (double mp = 0.01; mp < 0.95; mp += 0.02) {
    const auto t = tune_pi({0.5, 1.0, 0.3}, {1.4, mp});
    EXPECT_GT(t.theta, prev_theta);
    prev_theta = t.theta;
  }
}

TEST(PredictStep, Examples) {
  EXPECT_DOUBLE_EQ(predict_step({1.0, 0.0, 0.3}, 42.0, 100.0), 42.0);
  EXPECT_DOUBLE_EQ(predict_step({0.5, 0.0, 0.3}, 0.0, 0.0), 0.0);
  EXPECT_NEAR(predict_step({0.8, 0.05, 0.3}, 50.0, 400.0), 60.0, 1e-12);
}

TEST(PredictStep, Affine) {
  const FirstOrderModel m{0.7, 0.3, 0.3};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 100; ++i) {
    const double q1 = u(rng), q2 = u(rng), b1 = u(rng), b2 = u(rng);
    EXPECT_NEAR(predict_step(m, q1 + q2, b1 + b2),
                predict_step(m, q1, b1) + predict_step(m, q2, b2) - predict_step(m, 0, 0), 1e-9);
  }
}

TEST(ClosedLoopPoles, OpenLoopAndIntegrator) {
  auto p = closed_loop_poles({0.6, 0.05, 0.3}, {0.0, 0.0});
  expect_same_poles(p, {std::complex<double>(0.6), std::complex<double>(1.0)}, 1e-12);
}

TEST(ClosedLoopPoles, DeadbeatPlantState) {
  auto p = closed_loop_poles({0.5, 1.0, 0.3}, {0.5, 0.0});
  expect_same_poles(p, {std::complex<double>(0.0), std::complex<double>(1.0)}, 1e-12);
}

TEST(ClosedLoopPoles, TunedGainsLandOnDesignCircle) {
  const FirstOrderModel m{0.8, 0.05, 0.3};
  const auto t = tune_pi(m, {1.4, 0.02});
  const auto p = closed_loop_poles(m, t.runtime_gains());
  expect_same_poles(p, oracle_poles(m, t.runtime_gains()), 1e-9);
  for (const auto& z : p) EXPECT_NEAR(std::abs(z), t.r, 5e-2);
}

TEST(ClosedLoopPoles, VerbatimIntegralGainMissesDesign) {
  // Feeding the per-sample Ki into the ts-weighted law unchanged.
  const FirstOrderModel m{0.8, 0.05, 0.3};
  const auto t = tune_pi(m, {1.4, 0.02});
  const auto p = closed_loop_poles(m, t.gains);
  std::array<double, 2> mags{std::abs(p[0]), std::abs(p[1])};
  std::sort(mags.begin(), mags.end());
  EXPECT_NEAR(mags[0], 0.226, 2e-3);
  EXPECT_NEAR(mags[1], 0.797, 2e-3);
}

TEST(ClosedLoopPoles, MatchesCharacteristicPolynomialOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ua(-0.9, 0.9), ub(0.01, 2.0), ug(-20.0, 20.0),
      ut(0.05, 1.0);
  for (int i = 0; i < 200; ++i) {
    const FirstOrderModel m{ua(rng), ub(rng), ut(rng)};
    const PiGains g{ug(rng), ug(rng)};
    expect_same_poles(closed_loop_poles(m, g), oracle_poles(m, g), 1e-7);
  }
}

TEST(GainsForPeriod, KeepsPerSampleController) {
  const auto t = tune_pi({0.8, 0.05, 0.3}, {});
  EXPECT_DOUBLE_EQ(t.gains_for_period(0.1).ki * 0.1, t.gains.ki);
  EXPECT_DOUBLE_EQ(t.gains_for_period(0.1).kp, t.gains.kp);
  EXPECT_THROW(t.gains_for_period(0.0), InvalidArgument);
}

TEST(ModelDocument, JsonRoundTripRederivesGains) {
  const auto doc = make_model_document({0.8, 0.05, 0.3}, {1.4, 0.02});
  auto j = to_json(doc);
  for (const char* k : {"a", "b", "ts_s", "kp", "ki", "r", "theta"}) EXPECT_TRUE(j.contains(k));
  EXPECT_DOUBLE_EQ(j["spec"]["ks_s"].get<double>(), 1.4);
  j["kp"] = 999.0;  // stale gain in a hand-edited file
  const auto back = model_document_from_json(j);
  EXPECT_DOUBLE_EQ(back.tuning.gains.kp, doc.tuning.gains.kp);
  EXPECT_DOUBLE_EQ(back.model.a, 0.8);
  EXPECT_THROW(model_document_from_json(nlohmann::json{{"a", 0.8}}), InvalidArgument);
}

}  // namespace
