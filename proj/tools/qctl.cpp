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

// qctl: experiment driver, live controller, and client daemon.
//
// Exit codes: 0 success, 1 an acceptance-relevant check failed,
// 2 usage or runtime error.

#include <sys/wait.h>

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qctl/qctl.hpp"

namespace {

using namespace qctl;

volatile std::sig_atomic_t g_stop = 0;

std::uint64_t epoch_ms() {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::system_clock::now().time_since_epoch())
                                        .count());
}

int run_shell(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool live = false;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) {
    cfg.seeds = {*c.seed};
    cfg.sysid.seed = *c.seed;
  }
  if (c.out_dir) cfg.out_dir = *c.out_dir;
  validate(cfg);
  return cfg;
}

void print_result(const ExperimentResult& r) {
  std::cout << r.name << ": " << (r.passed ? "passed" : "FAILED")
            << (r.partial ? " (partial)" : "") << '\n';
  for (const auto& f : r.files) std::cout << "  wrote " << f.string() << '\n';
}

int live_ident(const ExperimentConfig& cfg) {
  WallClock clock;
  BlockStatSensor sensor(cfg.protocol.stat_path, clock);
  ShaperActuator act(cfg.protocol.iface, {cfg.protocol.burst_bytes, cfg.protocol.latency_ms},
                     run_shell, &std::cerr);
  sensor.read();  // prime the counter baseline
  const auto run = run_staircase(sensor, act, clock, cfg.sysid.schedule(), cfg.controller.ts);
  std::filesystem::create_directories(cfg.out_dir);
  const auto dir = std::filesystem::path(cfg.out_dir);
  save_trace(dir / "ident_trace.csv", run.trace);
  if (run.error) {
    std::cerr << "staircase aborted: " << *run.error << " (partial trace kept)\n";
    return 1;
  }
  const auto id = identify(run.trace, cfg.sysid.options());
  if (id.fit.unstable_warning) {
    std::cerr << "identified |a| >= 1; re-run identification\n";
    return 1;
  }
  std::ofstream(dir / "model.json") << to_json(make_model_document(id.fit.model, cfg.controller.design())).dump(2)
                                    << '\n';
  std::cout << "wrote " << (dir / "model.json").string() << '\n';
  return 0;
}

int live_control(const ExperimentConfig& cfg, const std::string& model_path,
                 const std::string& schedule_path, double duration, bool publish) {
  std::ifstream min(model_path);
  if (!min) throw IoError("cannot read model " + model_path);
  const auto doc = model_document_from_json(nlohmann::json::parse(min));
  ReferenceSchedule schedule =
      ReferenceSchedule::segments(cfg.control.targets, cfg.control.segment_s);
  if (!schedule_path.empty()) {
    std::ifstream sin(schedule_path);
    if (!sin) throw IoError("cannot read schedule " + schedule_path);
    schedule = ReferenceSchedule::read_csv(sin);
  }
  WallClock clock;
  BlockStatSensor sensor(cfg.protocol.stat_path, clock);
  sensor.read();
  std::optional<UdpSender> sender;
  std::unique_ptr<Actuator> act;
  if (publish) {
    sender.emplace(cfg.protocol.group, cfg.protocol.port);
    act = std::make_unique<ActionPublisher>([&](const WireBytes& b) { sender->send(b); }, epoch_ms);
  } else {
    act = std::make_unique<ShaperActuator>(
        cfg.protocol.iface, ShaperOptions{cfg.protocol.burst_bytes, cfg.protocol.latency_ms},
        run_shell, &std::cerr);
  }
  PiController ctrl(doc.tuning.gains_for_period(cfg.controller.ts), cfg.controller.ts,
                    schedule.at(0.0), cfg.controller.limits());
  const auto run = run_control_loop(ctrl, sensor, *act, clock, schedule, duration);
  std::filesystem::create_directories(cfg.out_dir);
  save_trace(std::filesystem::path(cfg.out_dir) / "control_trace_live.csv", run.trace);
  std::cout << "ticks " << run.ticks << ", skipped " << run.skipped << '\n';
  return run.failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qctl: feedback control of the storage dispatch queue"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "config file (JSON)");
    sub->add_option("--seed", common.seed, "run a single seed");
    sub->add_option("--out-dir", common.out_dir, "output directory");
    sub->add_flag("--live", common.live, "use the real block device and shaper");
  };

  for (const char* name : {"ident", "control", "perf", "sweep-ts", "sweep-gains"}) {
    add_common(app.add_subcommand(name, std::string("run the ") + name + " experiment"));
  }
  std::string model_path, schedule_path;
  double live_duration = 240.0;
  bool publish = false;
  auto* control = app.get_subcommand("control");
  control->add_option("--model", model_path, "model JSON (live mode)");
  control->add_option("--schedule", schedule_path, "reference CSV t_s,target_requests (live)");
  control->add_option("--duration", live_duration, "seconds (live mode)");
  control->add_flag("--publish", publish, "multicast actions instead of shaping locally (live)");

  auto* daemon = app.add_subcommand("daemon", "receive actions and shape the interface");
  add_common(daemon);
  std::string group = "239.255.42.1", iface = "eth0";
  std::uint16_t port = 5405;
  bool dry_run = false;
  long max_messages = -1;
  daemon->add_option("--group", group, "multicast group");
  daemon->add_option("--port", port, "UDP port");
  daemon->add_option("--iface", iface, "interface to shape");
  daemon->add_flag("--dry-run", dry_run, "log shaper commands instead of executing them");
  daemon->add_option("--max-messages", max_messages, "exit after this many datagrams");

  auto* send = app.add_subcommand("send", "emit one action datagram");
  double send_bw = 100.0;
  std::uint64_t send_seq = 1;
  send->add_option("--group", group, "multicast group");
  send->add_option("--port", port, "UDP port");
  send->add_option("--bw", send_bw, "bandwidth in Mbit/s")->required();
  send->add_option("--seq", send_seq, "sequence number");

  CLI11_PARSE(app, argc, argv);

  try {
    if (daemon->parsed()) {
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      ShaperActuator act(iface, {}, dry_run ? ShaperActuator::Executor{} : run_shell, &std::cout);
      UdpReceiver rx(group, port);
      ReceiverState st;
      long seen = 0;
      while (!g_stop && (max_messages < 0 || seen < max_messages)) {
        const auto dgram = rx.receive(500);
        if (!dgram) continue;
        ++seen;
        receiver_handle(st, *dgram, act);
        std::cout.flush();
      }
      std::cerr << "applied " << st.apply_count << ", stale " << st.stale_count << ", bad "
                << st.decode_error_count << ", failed " << st.failure_count << '\n';
      return 0;
    }
    if (send->parsed()) {
      UdpSender tx(group, port);
      ControlMessage m;
      m.seq = send_seq;
      m.bw_bits_per_s = mbit_to_bits(send_bw);
      m.timestamp_ms = epoch_ms();
      tx.send(encode_msg(m));
      return 0;
    }

    const auto* sub = app.get_subcommands().front();
    const ExperimentConfig cfg = resolve(common);
    if (common.live) {
      if (sub->get_name() == "ident") return live_ident(cfg);
      if (sub->get_name() == "control") {
        if (model_path.empty()) throw InvalidArgument("--live control needs --model");
        return live_control(cfg, model_path, schedule_path, live_duration, publish);
      }
      throw InvalidArgument(sub->get_name() + " runs on the simulator only");
    }
    const auto r = run_experiment(sub->get_name(), cfg, cfg.out_dir);
    print_result(r);
    return r.passed ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
