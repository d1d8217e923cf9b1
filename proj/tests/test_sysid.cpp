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

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "qctl/plant.hpp"
#include "qctl/sysid.hpp"

namespace {

using namespace qctl;

Trace linear_staircase(double a, double b, const std::vector<double>& levels, int per_level,
                       double ts = 0.3) {
  Trace tr;
  tr.ts = ts;
  double q = 0.0;
  int k = 0;
  for (double bw : levels) {
    for (int j = 0; j < per_level; ++j, ++k) {
      tr.samples.push_back({(k + 1) * ts, bw, q});
      q = predict_step({a, b, ts}, q, bw);
    }
  }
  return tr;
}

TEST(Savgol, CoefficientsMatchClosedForm) {
  const auto c = savgol_coefficients(5, 2);
  const double ref[] = {-3, 12, 17, 12, -3};
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(c[i], ref[i] / 35.0, 1e-12);
  // Reference weights for (11, 3) from an established signal library.
  const double ref11[] = {-0.083916083916, 0.020979020979, 0.102564102564, 0.160839160839,
                          0.195804195804,  0.207459207459, 0.195804195804, 0.160839160839,
                          0.102564102564,  0.020979020979, -0.083916083916};
  const auto c11 = savgol_coefficients(11, 3);
  for (int i = 0; i < 11; ++i) EXPECT_NEAR(c11[i], ref11[i], 1e-11);
}

TEST(Savgol, ConstantSeriesUnchanged) {
  const std::vector<double> x(11, 5.0);
  for (double v : savgol_filter(x, 5, 2)) EXPECT_NEAR(v, 5.0, 1e-12);
}

TEST(Savgol, RampUnchangedAwayFromEdges) {
  std::vector<double> x;
  for (int i = 0; i <= 20; ++i) x.push_back(i);
  const auto y = savgol_filter(x, 7, 2);
  for (int i = 3; i <= 17; ++i) EXPECT_NEAR(y[i], x[i], 1e-9);
}

TEST(Savgol, MatchesReferenceImplementationIncludingEdges) {
  const std::vector<double> x{3.1, 4.7, 2.2, 8.9, 5.5, 6.1, 9.4, 7.3,
                              10.2, 12.8, 11.1, 9.9, 14.6, 13.0, 15.7};
  // Reference output (mirror edge mode) from an established signal library.
  const std::vector<double> ref52{4.351428571429, 2.934285714286, 4.994285714286, 6.037142857143,
                                  6.82, 6.682857142857, 7.814285714286, 8.645714285714,
                                  10.088571428571, 12.045714285714, 11.048571428571,
                                  11.408571428571, 12.645714285714, 14.74, 14.037142857143};
  const std::vector<double> ref73{2.652380952381, 4.290476190476, 4.819047619048, 5.519047619048,
                                  6.633333333333, 7.42380952381, 7.138095238095, 9.152380952381,
                                  10.547619047619, 10.52380952381, 11.795238095238,
                                  11.861904761905, 12.780952380952, 13.814285714286,
                                  14.947619047619};
  const auto y52 = savgol_filter(x, 5, 2);
  const auto y73 = savgol_filter(x, 7, 3);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(y52[i], ref52[i], 1e-9) << i;
    EXPECT_NEAR(y73[i], ref73[i], 1e-9) << i;
  }
}

TEST(Savgol, SmoothsNoisyRamp) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> clean, noisy;
  for (int i = 0; i < 20000; ++i) {
    clean.push_back(0.5 * i);
    noisy.push_back(clean.back() + n(rng));
  }
  const auto y = savgol_filter(noisy, 11, 3);
  double acc = 0.0;
  int cnt = 0;
  for (int i = 5; i < 19995; ++i, ++cnt) acc += (y[i] - clean[i]) * (y[i] - clean[i]);
  // Unit white noise through the filter keeps variance sum(c^2).
  double gain = 0.0;
  for (double c : savgol_coefficients(11, 3)) gain += c * c;
  EXPECT_NEAR(std::sqrt(acc / cnt), std::sqrt(gain), 0.03 * std::sqrt(gain));
}

TEST(Savgol, PreservesMeanOfStationarySeries) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(50.0, 4.0);
  std::vector<double> x(5000);
  for (auto& v : x) v = n(rng);
  const auto y = savgol_filter(x, 5, 2);
  double mx = 0, my = 0;
  for (std::size_t i = 10; i + 10 < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  EXPECT_NEAR(my / mx, 1.0, 0.01);
}

TEST(Savgol, RejectsInvalidParameters) {
  const std::vector<double> x(20, 1.0);
  EXPECT_THROW(savgol_filter(x, 4, 2), InvalidArgument);
  EXPECT_THROW(savgol_filter(x, 5, 5), InvalidArgument);
  EXPECT_THROW(savgol_filter(x, 5, -1), InvalidArgument);
  EXPECT_THROW(savgol_filter(std::vector<double>(3, 1.0), 5, 2), InvalidArgument);
}

TEST(RollingMean, TrailingWindow) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const auto y = rolling_mean(x, 2);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], 1.5);
  EXPECT_DOUBLE_EQ(y[4], 4.5);
  EXPECT_THROW(rolling_mean(x, 0), InvalidArgument);
}

TEST(ExcludeSaturation, NothingToExclude) {
  Trace tr;
  for (int i = 0; i < 50; ++i) tr.samples.push_back({0.3 * i, 10.0, 3.0 + i % 100});
  const auto out = exclude_saturation(tr, 128, 2);
  ASSERT_EQ(out.size(), tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) EXPECT_EQ(out.samples[i].q, tr.samples[i].q);
}

TEST(ExcludeSaturation, EmptyQueueEverywhereIsInfeasible) {
  Trace tr;
  for (int i = 0; i < 50; ++i) tr.samples.push_back({0.3 * i, 10.0, 0.0});
  EXPECT_THROW(exclude_saturation(tr, 128, 2), IdentificationInfeasible);
}

TEST(ExcludeSaturation, DropsSaturatedFraction) {
  Trace tr;
  for (int i = 0; i < 100; ++i) tr.samples.push_back({0.3 * i, 10.0, i % 10 < 3 ? 128.0 : 60.0});
  const auto out = exclude_saturation(tr, 128, 2);
  EXPECT_EQ(out.size(), 70u);
  EXPECT_DOUBLE_EQ(out.samples[0].t, 0.9);  // timestamps survive
}

TEST(ExcludeSaturation, Idempotent) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 128.0);
  Trace tr;
  for (int i = 0; i < 500; ++i) tr.samples.push_back({0.3 * i, 10.0, u(rng)});
  const auto once = exclude_saturation(tr, 128, 2);
  const auto twice = exclude_saturation(once, 128, 2);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once.samples[i].t, twice.samples[i].t);
}

TEST(ExcludeSaturation, RejectsBadBounds) {
  Trace tr;
  tr.samples.push_back({0, 1, 5});
  EXPECT_THROW(exclude_saturation(tr, 0, 1), InvalidArgument);
  EXPECT_THROW(exclude_saturation(tr, 128, 64), InvalidArgument);
}

TEST(FitFirstOrder, RecoversExactLinearPlant) {
  const auto tr = linear_staircase(0.8, 0.05, {200, 400, 600, 800, 1000, 1200}, 20);
  const auto fit = fit_first_order(tr);
  EXPECT_NEAR(fit.model.a, 0.8, 1e-6);
  EXPECT_NEAR(fit.model.b, 0.05, 1e-6);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-9);
  EXPECT_LT(fit.residual_std, 1e-6);
  EXPECT_FALSE(fit.unstable_warning);
}

TEST(FitFirstOrder, SkipsPairsAcrossGaps) {
  auto tr = linear_staircase(0.7, 0.1, {100, 300, 200, 400}, 20);
  // Remove every 7th row: pairs spanning a hole must not be used.
  Trace holed = tr;
  holed.samples.clear();
  for (std::size_t i = 0; i < tr.size(); ++i) {
    if (i % 7 != 3) holed.samples.push_back(tr.samples[i]);
  }
  const auto fit = fit_first_order(holed);
  EXPECT_NEAR(fit.model.a, 0.7, 1e-9);
  EXPECT_NEAR(fit.model.b, 0.1, 1e-9);
  EXPECT_LT(fit.pairs, holed.size() - 1);
}

TEST(FitFirstOrder, ConstantBandwidthIsRankDeficient) {
  const auto tr = linear_staircase(0.8, 0.05, {500}, 60);
  try {
    fit_first_order(tr);
    FAIL() << "expected RankDeficient";
  } catch (const RankDeficient& e) {
    EXPECT_NE(std::string(e.what()).find("excitation"), std::string::npos);
  }
}

TEST(FitFirstOrder, TooFewPairs) {
  const auto tr = linear_staircase(0.8, 0.05, {100, 200}, 10);
  EXPECT_THROW(fit_first_order(tr), IdentificationInfeasible);
}

TEST(FitFirstOrder, FlagsUnstablePole) {
  const auto tr = linear_staircase(1.02, 0.01, {10, 20, 5}, 20);
  const auto fit = fit_first_order(tr);
  EXPECT_TRUE(fit.unstable_warning);
  EXPECT_THROW(tune_pi(fit.model, {}), InvalidArgument);
}

TEST(FitFirstOrder, NoisyPlantWithinTolerance) {
  const auto clean = linear_staircase(0.8, 0.05, {200, 400, 600, 800, 1000, 1200}, 100);
  IdentOptions opt;
  opt.q_max = 1e9;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 2.0);
    Trace tr = clean;
    for (auto& s : tr.samples) s.q = std::max(0.0, s.q + n(rng));
    const auto id = identify(tr, opt);
    EXPECT_NEAR(id.fit.model.a, 0.8, 0.05);
    EXPECT_NEAR(id.fit.model.b / 0.05, 1.0, 0.15);
  }
}

class FlakyActuator final : public Actuator {
 public:
  explicit FlakyActuator(Actuator& inner, double reject) : inner_(inner), reject_(reject) {}
  void apply(double bw) override {
    if (bw == reject_) throw IoError("level rejected");
    inner_.apply(bw);
  }

 private:
  Actuator& inner_;
  double reject_;
};

TEST(RunStaircase, SampleCounts) {
  PlantConfig cfg;
  SimulatedStorage sim(cfg, 1);
  const auto run = run_staircase(sim, sim, sim, {{50, 100, 150, 200, 250, 300, 350, 400}, 30.0}, 0.3);
  EXPECT_FALSE(run.error);
  EXPECT_EQ(run.trace.size(), 800u);
  EXPECT_EQ(run.trace.meta["level_change_t_s"].size(), 8u);
  EXPECT_NO_THROW(validate(run.trace));

  SimulatedStorage sim2(cfg, 1);
  EXPECT_EQ(run_staircase(sim2, sim2, sim2, {{100}, 3.0}, 0.3).trace.size(), 10u);
}

TEST(RunStaircase, RejectsShortHold) {
  PlantConfig cfg;
  SimulatedStorage sim(cfg, 1);
  EXPECT_THROW(run_staircase(sim, sim, sim, {{100}, 2.0}, 0.3), InvalidArgument);
}

TEST(RunStaircase, ActuatorFailureGivesPartialTrace) {
  PlantConfig cfg;
  SimulatedStorage sim(cfg, 1);
  FlakyActuator act(sim, 150.0);
  const auto run = run_staircase(sim, act, sim, {{50, 100, 150, 200}, 3.0}, 0.3);
  ASSERT_TRUE(run.error);
  EXPECT_EQ(run.trace.size(), 20u);
  EXPECT_TRUE(run.trace.meta["partial"].get<bool>());
}

TEST(PlateauMeans, SecondHalfOfEachLevel) {
  Trace tr;
  for (int i = 0; i < 10; ++i) tr.samples.push_back({0.3 * i, 50.0, i < 5 ? 0.0 : 10.0});
  for (int i = 10; i < 20; ++i) tr.samples.push_back({0.3 * i, 80.0, 20.0});
  const auto p = plateau_means(tr);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_DOUBLE_EQ(p[0].mean_q, 10.0);
  EXPECT_EQ(p[0].samples, 5u);
  EXPECT_DOUBLE_EQ(p[1].bw, 80.0);
}

TEST(Identify, DeterministicGivenSeed) {
  PlantConfig cfg;
  auto once = [&] {
    SimulatedStorage sim(cfg, 3);
    auto run = run_staircase(sim, sim, sim, {{50, 65, 80, 95, 110, 125, 140, 155}, 9.0}, 0.3);
    return std::pair(run.trace, identify(run.trace).fit.model);
  };
  const auto [t1, m1] = once();
  const auto [t2, m2] = once();
  ASSERT_EQ(t1.size(), t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) EXPECT_EQ(t1.samples[i].q, t2.samples[i].q);
  EXPECT_EQ(m1.a, m2.a);
  EXPECT_EQ(m1.b, m2.b);
}

}  // namespace
