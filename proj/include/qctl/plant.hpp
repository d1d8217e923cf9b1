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

// Seeded storage simulator: N clients write through per-client bandwidth
// limits into one server dispatch queue. Queue size follows a static
// logistic map of the aggregate limit through a first-order lag
// (Hammerstein structure); the sensor reports the windowed average of a
// time_in_queue counter like the kernel's.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qctl/controller.hpp"
#include "qctl/error.hpp"
#include "qctl/io.hpp"

namespace qctl {

struct PlantConfig {
  int n_clients = 16;
  double q_max = 128.0;           // requests
  double bw0 = 100.0;             // Mbit/s, logistic midpoint (per client)
  double s = 50.0;                // Mbit/s, logistic slope scale
  double lag_alpha = 0.15;        // relaxation per ts_ref
  double noise_std = 0.25;        // process noise, requests per ts_ref
  double meas_std = 4.0;          // sensor noise at a 50 ms window, requests
  double congestion_threshold = 0.9;
  double congestion_penalty = 0.6;
  double disk_rate = 200.0;       // MB/s
  double dt_sim = 0.01;           // s
  double ts_ref = 0.3;            // s, normalises lag_alpha and noise_std
};

inline void validate(const PlantConfig& c) {
  auto bad = [](const char* what) { throw InvalidArgument(std::string("plant config: ") + what); };
  if (c.n_clients < 1) bad("n_clients >= 1");
  if (!(c.q_max > 0.0)) bad("q_max > 0");
  if (!(c.s > 0.0)) bad("s > 0");
  if (!(c.lag_alpha > 0.0 && c.lag_alpha < 1.0)) bad("0 < lag_alpha < 1");
  if (!(c.noise_std >= 0.0) || !(c.meas_std >= 0.0)) bad("noise >= 0");
  if (!(c.congestion_threshold > 0.0 && c.congestion_threshold < 1.0)) {
    bad("0 < congestion_threshold < 1");
  }
  if (!(c.congestion_penalty > 0.0 && c.congestion_penalty <= 1.0)) {
    bad("0 < congestion_penalty <= 1");
  }
  if (!(c.disk_rate > 0.0)) bad("disk_rate > 0");
  if (!(c.dt_sim > 0.0)) bad("dt_sim > 0");
  if (!(c.ts_ref > 0.0)) bad("ts_ref > 0");
}

/// Steady-state queue size for a per-client limit.
inline double static_map(const PlantConfig& c, double bw) {
  if (!(bw >= 0.0)) throw InvalidArgument("static_map: bw must be >= 0");
  return c.q_max / (1.0 + std::exp(-(bw - c.bw0) / c.s));
}

struct PlantState {
  double q_true = 0.0;
  double time_in_queue_ms = 0.0;
  /// Empty when no workload is attached (demand is unlimited).
  std::vector<double> bytes_remaining;
  std::mt19937_64 rng{1};

  int active_clients(int n_clients) const {
    if (bytes_remaining.empty()) return n_clients;
    return static_cast<int>(
        std::count_if(bytes_remaining.begin(), bytes_remaining.end(), [](double b) { return b > 0.0; }));
  }
};

inline double normal(std::mt19937_64& rng, double std_dev) {
  if (std_dev == 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, std_dev)(rng);
}

/// Advances the plant by dt under a per-client limit. Returns the bytes
/// written during the step.
inline double plant_step(const PlantConfig& c, PlantState& st, double bw_limit, double dt) {
  const int active = st.active_clients(c.n_clients);
  // Idle clients send nothing, so the aggregate load shrinks with them.
  const double effective_bw = bw_limit * active / static_cast<double>(c.n_clients);
  const double target = static_map(c, effective_bw);
  const double scale = dt / c.ts_ref;
  double q = st.q_true + c.lag_alpha * (target - st.q_true) * scale +
             normal(st.rng, c.noise_std * std::sqrt(scale));
  st.q_true = std::clamp(q, 0.0, c.q_max);
  st.time_in_queue_ms += st.q_true * dt * 1000.0;

  double written = 0.0;
  if (active > 0 && !st.bytes_remaining.empty()) {
    const double penalty =
        st.q_true > c.congestion_threshold * c.q_max ? c.congestion_penalty : 1.0;
    const double per_client =
        std::min(bw_limit * 1e6 / 8.0, c.disk_rate * 1e6 / active) * penalty;
    for (double& b : st.bytes_remaining) {
      if (b <= 0.0) continue;
      const double w = std::min(b, per_client * dt);
      b -= w;
      written += w;
    }
  }
  return written;
}

/// Windowed average of the queue from two counter readings, plus sensor
/// noise whose spread shrinks with the window.
inline double sense(const PlantConfig& c, double tiq_delta_ms, double window_s,
                    std::mt19937_64& rng) {
  const double avg = tiq_delta_ms / (window_s * 1000.0);
  return std::max(0.0, avg + normal(rng, c.meas_std / std::sqrt(window_s / 0.05)));
}

/// The simulator behind the Sensor/Actuator/Clock seams. sleep_until
/// advances the plant in dt_sim steps.
class SimulatedStorage final : public Sensor, public Actuator, public Clock {
 public:
  SimulatedStorage(PlantConfig config, std::uint64_t seed) : config_(config) {
    validate(config_);
    state_.rng.seed(seed);
  }

  /// Attaches a finite write workload: one byte budget per client.
  void set_workload(double bytes_per_client) {
    state_.bytes_remaining.assign(static_cast<std::size_t>(config_.n_clients), bytes_per_client);
    completion_.assign(static_cast<std::size_t>(config_.n_clients), -1.0);
  }

  std::optional<double> read() override {
    const double window = now() - last_read_t_;
    if (!(window > 0.0)) return std::nullopt;
    const double v = sense(config_, state_.time_in_queue_ms - last_tiq_, window, state_.rng);
    last_read_t_ = now();
    last_tiq_ = state_.time_in_queue_ms;
    return v;
  }

  void apply(double bw_mbit) override {
    if (!(bw_mbit >= 0.0)) throw InvalidArgument("simulated actuator: bw must be >= 0");
    bw_ = bw_mbit;
  }

  double now() override { return static_cast<double>(steps_) * config_.dt_sim; }

  void sleep_until(double t) override {
    const auto target = static_cast<std::int64_t>(std::llround(t / config_.dt_sim));
    while (steps_ < target) {
      written_ += plant_step(config_, state_, bw_, config_.dt_sim);
      ++steps_;
      for (std::size_t i = 0; i < completion_.size(); ++i) {
        if (completion_[i] < 0.0 && state_.bytes_remaining[i] <= 0.0) completion_[i] = now();
      }
    }
  }

  bool workload_done() const {
    return !completion_.empty() &&
           std::all_of(completion_.begin(), completion_.end(), [](double c) { return c >= 0.0; });
  }

  const PlantConfig& config() const noexcept { return config_; }
  const PlantState& state() const noexcept { return state_; }
  PlantState& state() noexcept { return state_; }
  double bandwidth() const noexcept { return bw_; }
  double bytes_written() const noexcept { return written_; }
  const std::vector<double>& completion_times() const noexcept { return completion_; }

 private:
  PlantConfig config_;
  PlantState state_;
  double bw_ = 0.0;
  std::int64_t steps_ = 0;
  double last_read_t_ = 0.0;
  double last_tiq_ = 0.0;
  double written_ = 0.0;
  std::vector<double> completion_;
};

struct WorkloadSpec {
  double bytes_per_job = 4.0 * 1024 * 1024 * 1024;
  int jobs_per_client = 4;
  double block_size = 1024.0 * 1024;
  int iodepth = 16;
  double jitter_std = 0.05;

  double bytes_per_client() const { return bytes_per_job * jobs_per_client; }
};

inline void validate(const WorkloadSpec& w) {
  if (!(w.bytes_per_job > 0.0) || w.jobs_per_client < 1 || !(w.block_size > 0.0) ||
      w.iodepth < 1 || !(w.jitter_std >= 0.0)) {
    throw InvalidArgument("workload invariant violated: all fields positive");
  }
}

/// Closed-loop settings for a controlled workload run.
struct WorkloadControl {
  PiGains runtime_gains;
  double ts = 0.3;
  double target = 80.0;
  OutputLimits limits;
};

struct WorkloadResult {
  std::vector<double> runtimes;  // s, per client, jitter applied
  double bytes_requested = 0.0;
  double bytes_written = 0.0;
  double sim_time = 0.0;
};

/// Zero-congestion lower bound on the makespan: every byte at full disk
/// rate (or at the aggregate limit if that is lower).
inline double workload_lower_bound(const PlantConfig& c, const WorkloadSpec& w, double bw_max) {
  const double total = w.bytes_per_client() * c.n_clients;
  const double rate = std::min(c.disk_rate * 1e6, bw_max * 1e6 / 8.0 * c.n_clients);
  return total / rate;
}

inline constexpr double kTimeCapFactor = 4.0;

/// Runs the workload to completion. Without `control` every client is
/// limited to `bw_max` throughout (baseline).
inline WorkloadResult simulate_workload(const PlantConfig& config, const WorkloadSpec& workload,
                                        const std::optional<WorkloadControl>& control,
                                        double bw_max, std::uint64_t seed) {
  validate(workload);
  SimulatedStorage sim(config, seed);
  sim.set_workload(workload.bytes_per_client());
  const double cap = kTimeCapFactor * workload_lower_bound(config, workload, bw_max);

  if (control) {
    if (config.dt_sim > control->ts / 10.0 + 1e-12) {
      throw InvalidArgument("plant config: dt_sim must be <= ts/10");
    }
    OutputLimits limits = control->limits;
    limits.max = bw_max;
    PiController ctrl(control->runtime_gains, control->ts, control->target, limits);
    sim.apply(ctrl.last_output());
    for (std::int64_t k = 1; !sim.workload_done(); ++k) {
      const double t = static_cast<double>(k) * control->ts;
      if (t > cap + control->ts) throw SimulationTimeout("workload exceeded the time cap");
      sim.sleep_until(t);
      const auto q = sim.read();
      sim.apply(q ? ctrl.step(*q) : ctrl.last_output());
    }
  } else {
    sim.apply(bw_max);
    const double chunk = 0.1;
    for (std::int64_t k = 1; !sim.workload_done(); ++k) {
      const double t = static_cast<double>(k) * chunk;
      if (t > cap + chunk) throw SimulationTimeout("workload exceeded the time cap");
      sim.sleep_until(t);
    }
  }

  WorkloadResult out;
  out.bytes_requested = workload.bytes_per_client() * config.n_clients;
  out.bytes_written = sim.bytes_written();
  out.sim_time = sim.now();
  auto& rng = sim.state().rng;
  for (double c : sim.completion_times()) {
    if (c > cap) throw SimulationTimeout("workload exceeded the time cap");
    const double j = 1.0 + normal(rng, workload.jitter_std);
    out.runtimes.push_back(c * std::max(j, 0.01));
  }
  return out;
}

}  // namespace qctl
