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

// Toolkit configuration file. Every key is optional; absent keys keep the
// defaults below, which are also what configs/default.json spells out.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qctl/controller.hpp"
#include "qctl/error.hpp"
#include "qctl/model.hpp"
#include "qctl/plant.hpp"
#include "qctl/sysid.hpp"

namespace qctl {

struct ControllerSection {
  double ts = 0.3;
  double ks = 1.4;
  double mp = 0.02;
  double bw_min = kMinBandwidthMbit;
  double bw_max = 10000.0;

  DesignSpec design() const { return {ks, mp}; }
  OutputLimits limits() const { return {bw_min, bw_max}; }
};

struct SysidSection {
  std::vector<double> levels{50, 65, 80, 95, 110, 125, 140, 155};
  double hold_s = 9.0;
  int savgol_window = 5;
  int savgol_polyorder = 2;
  double q_max = 128.0;
  double eps = 2.0;
  std::uint64_t seed = 1;

  IdentOptions options() const { return {savgol_window, savgol_polyorder, q_max, eps}; }
  StaircaseSchedule schedule() const { return {levels, hold_s}; }
};

struct ControlSection {
  std::vector<double> targets{30, 60, 90, 50};
  double segment_s = 60.0;
  double settle_skip_s = 10.0;
  std::size_t smoothing = 10;
};

struct PerfSection {
  std::vector<double> targets{60, 70, 80, 90};
  double workload_scale = 0.01;
};

struct SweepTsSection {
  std::vector<double> periods{0.05, 0.1, 0.5};
  double target = 60.0;
  double duration_s = 60.0;
  double skip_s = 10.0;
};

struct SweepGainsSection {
  std::vector<double> scales{1.0, 100.0, 0.01};
};

struct ProtocolSection {
  std::string group = "239.255.42.1";
  std::uint16_t port = 5405;
  std::string iface = "eth0";
  std::uint64_t burst_bytes = 32 * 1024;
  int latency_ms = 400;
  std::string stat_path = "/sys/block/sda/stat";
};

struct ExperimentConfig {
  PlantConfig plant;
  WorkloadSpec workload;
  ControllerSection controller;
  SysidSection sysid;
  ControlSection control;
  PerfSection perf;
  SweepTsSection sweep_ts;
  SweepGainsSection sweep_gains;
  ProtocolSection protocol;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string out_dir = "out";
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& p = c.plant;
  const auto& w = c.workload;
  return {
      {"plant",
       {{"n_clients", p.n_clients}, {"q_max", p.q_max}, {"bw0", p.bw0}, {"s", p.s},
        {"lag_alpha", p.lag_alpha}, {"noise_std", p.noise_std}, {"meas_std", p.meas_std},
        {"congestion_threshold", p.congestion_threshold},
        {"congestion_penalty", p.congestion_penalty}, {"disk_rate", p.disk_rate},
        {"dt_sim", p.dt_sim}, {"ts_ref", p.ts_ref}}},
      {"workload",
       {{"bytes_per_job", w.bytes_per_job}, {"jobs_per_client", w.jobs_per_client},
        {"block_size", w.block_size}, {"iodepth", w.iodepth}, {"jitter_std", w.jitter_std}}},
      {"controller",
       {{"ts", c.controller.ts}, {"ks", c.controller.ks}, {"mp", c.controller.mp},
        {"bw_min", c.controller.bw_min}, {"bw_max", c.controller.bw_max}}},
      {"sysid",
       {{"levels", c.sysid.levels}, {"hold_s", c.sysid.hold_s},
        {"savgol_window", c.sysid.savgol_window}, {"savgol_polyorder", c.sysid.savgol_polyorder},
        {"q_max", c.sysid.q_max}, {"eps", c.sysid.eps}, {"seed", c.sysid.seed}}},
      {"control",
       {{"targets", c.control.targets}, {"segment_s", c.control.segment_s},
        {"settle_skip_s", c.control.settle_skip_s}, {"smoothing", c.control.smoothing}}},
      {"perf", {{"targets", c.perf.targets}, {"workload_scale", c.perf.workload_scale}}},
      {"sweep_ts",
       {{"periods", c.sweep_ts.periods}, {"target", c.sweep_ts.target},
        {"duration_s", c.sweep_ts.duration_s}, {"skip_s", c.sweep_ts.skip_s}}},
      {"sweep_gains", {{"scales", c.sweep_gains.scales}}},
      {"protocol",
       {{"group", c.protocol.group}, {"port", c.protocol.port}, {"iface", c.protocol.iface},
        {"burst_bytes", c.protocol.burst_bytes}, {"latency_ms", c.protocol.latency_ms},
        {"stat_path", c.protocol.stat_path}}},
      {"seeds", c.seeds},
      {"out_dir", c.out_dir},
  };
}

namespace detail {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  validate(c.plant);
  validate(c.workload);
  validate(c.controller.design());
  validate(c.controller.limits());
  if (!(c.controller.ts > 0.0)) throw InvalidArgument("config: controller.ts must be > 0");
  validate(c.sysid.schedule(), c.controller.ts);
  if (c.seeds.empty()) throw InvalidArgument("config: seeds must be non-empty");
  if (c.control.targets.empty() || !(c.control.segment_s > 0.0)) {
    throw InvalidArgument("config: control schedule must be non-empty");
  }
  if (c.control.smoothing == 0) throw InvalidArgument("config: control.smoothing must be >= 1");
  if (c.perf.targets.empty() || !(c.perf.workload_scale > 0.0)) {
    throw InvalidArgument("config: perf targets non-empty and workload_scale > 0");
  }
  if (c.sweep_ts.periods.empty() || !(c.sweep_ts.duration_s > c.sweep_ts.skip_s)) {
    throw InvalidArgument("config: sweep_ts periods non-empty and duration_s > skip_s");
  }
  for (double p : c.sweep_ts.periods) {
    if (!(p > 0.0)) throw InvalidArgument("config: sweep_ts periods must be > 0");
  }
  if (c.sweep_gains.scales.empty()) throw InvalidArgument("config: sweep_gains.scales empty");
  if (c.plant.dt_sim > c.controller.ts / 10.0 + 1e-12) {
    throw InvalidArgument("config: plant.dt_sim must be <= controller.ts / 10");
  }
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("plant")) {
      const auto& p = j.at("plant");
      detail::read_key(p, "n_clients", c.plant.n_clients);
      detail::read_key(p, "q_max", c.plant.q_max);
      detail::read_key(p, "bw0", c.plant.bw0);
      detail::read_key(p, "s", c.plant.s);
      detail::read_key(p, "lag_alpha", c.plant.lag_alpha);
      detail::read_key(p, "noise_std", c.plant.noise_std);
      detail::read_key(p, "meas_std", c.plant.meas_std);
      detail::read_key(p, "congestion_threshold", c.plant.congestion_threshold);
      detail::read_key(p, "congestion_penalty", c.plant.congestion_penalty);
      detail::read_key(p, "disk_rate", c.plant.disk_rate);
      detail::read_key(p, "dt_sim", c.plant.dt_sim);
      detail::read_key(p, "ts_ref", c.plant.ts_ref);
    }
    if (j.contains("workload")) {
      const auto& w = j.at("workload");
      detail::read_key(w, "bytes_per_job", c.workload.bytes_per_job);
      detail::read_key(w, "jobs_per_client", c.workload.jobs_per_client);
      detail::read_key(w, "block_size", c.workload.block_size);
      detail::read_key(w, "iodepth", c.workload.iodepth);
      detail::read_key(w, "jitter_std", c.workload.jitter_std);
    }
    if (j.contains("controller")) {
      const auto& k = j.at("controller");
      detail::read_key(k, "ts", c.controller.ts);
      detail::read_key(k, "ks", c.controller.ks);
      detail::read_key(k, "mp", c.controller.mp);
      detail::read_key(k, "bw_min", c.controller.bw_min);
      detail::read_key(k, "bw_max", c.controller.bw_max);
    }
    if (j.contains("sysid")) {
      const auto& s = j.at("sysid");
      detail::read_key(s, "levels", c.sysid.levels);
      detail::read_key(s, "hold_s", c.sysid.hold_s);
      detail::read_key(s, "savgol_window", c.sysid.savgol_window);
      detail::read_key(s, "savgol_polyorder", c.sysid.savgol_polyorder);
      detail::read_key(s, "q_max", c.sysid.q_max);
      detail::read_key(s, "eps", c.sysid.eps);
      detail::read_key(s, "seed", c.sysid.seed);
    }
    if (j.contains("control")) {
      const auto& s = j.at("control");
      detail::read_key(s, "targets", c.control.targets);
      detail::read_key(s, "segment_s", c.control.segment_s);
      detail::read_key(s, "settle_skip_s", c.control.settle_skip_s);
      detail::read_key(s, "smoothing", c.control.smoothing);
    }
    if (j.contains("perf")) {
      detail::read_key(j.at("perf"), "targets", c.perf.targets);
      detail::read_key(j.at("perf"), "workload_scale", c.perf.workload_scale);
    }
    if (j.contains("sweep_ts")) {
      const auto& s = j.at("sweep_ts");
      detail::read_key(s, "periods", c.sweep_ts.periods);
      detail::read_key(s, "target", c.sweep_ts.target);
      detail::read_key(s, "duration_s", c.sweep_ts.duration_s);
      detail::read_key(s, "skip_s", c.sweep_ts.skip_s);
    }
    if (j.contains("sweep_gains")) detail::read_key(j.at("sweep_gains"), "scales", c.sweep_gains.scales);
    if (j.contains("protocol")) {
      const auto& s = j.at("protocol");
      detail::read_key(s, "group", c.protocol.group);
      detail::read_key(s, "port", c.protocol.port);
      detail::read_key(s, "iface", c.protocol.iface);
      detail::read_key(s, "burst_bytes", c.protocol.burst_bytes);
      detail::read_key(s, "latency_ms", c.protocol.latency_ms);
      detail::read_key(s, "stat_path", c.protocol.stat_path);
    }
    detail::read_key(j, "seeds", c.seeds);
    detail::read_key(j, "out_dir", c.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

/// 64-bit FNV-1a over the canonical (sorted-key) JSON of the config.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace qctl
