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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <gtest/gtest.h>

#include "qctl/config.hpp"
#include "qctl/experiment.hpp"

namespace {

using namespace qctl;
namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("qctl_test_" + name);
  fs::remove_all(p);
  return p;
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(QCTL_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

TEST(Config, DefaultFileMatchesBuiltInDefaults) {
  const auto cfg = load_config(QCTL_DEFAULT_CONFIG);
  EXPECT_EQ(to_json(cfg), to_json(ExperimentConfig{}));
}

TEST(Config, JsonRoundTripAndHash) {
  ExperimentConfig c;
  c.plant.congestion_penalty = 0.5;
  c.seeds = {7};
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_NE(config_hash(c), config_hash(ExperimentConfig{}));
}

TEST(Config, RejectsInvalid) {
  EXPECT_THROW(config_from_json({{"seeds", nlohmann::json::array()}}), InvalidArgument);
  EXPECT_THROW(config_from_json({{"plant", {{"lag_alpha", 1.5}}}}), InvalidArgument);
  EXPECT_THROW(config_from_json({{"controller", {{"bw_min", 0.01}}}}), InvalidArgument);
  EXPECT_THROW(config_from_json({{"plant", {{"dt_sim", 0.1}}}}), InvalidArgument);
  EXPECT_THROW(config_from_json({{"sysid", {{"hold_s", "long"}}}}), InvalidArgument);
}

TEST(Experiments, UnknownNameRejected) {
  EXPECT_THROW(run_experiment("nope", {}, scratch("unknown")), InvalidArgument);
}

TEST(Experiments, IdentWritesModelAndStaticMap) {
  const auto dir = scratch("ident");
  const auto r = run_ident({}, dir);
  EXPECT_TRUE(r.passed);
  const auto model = nlohmann::json::parse(slurp(dir / "model.json"));
  EXPECT_NO_THROW(model_document_from_json(model));
  EXPECT_TRUE(fs::exists(dir / "ident_trace.meta.json"));
  const auto summary = nlohmann::json::parse(slurp(dir / "ident_summary.json"));
  EXPECT_EQ(summary["config_hash"].get<std::string>().size(), 16u);
  EXPECT_FALSE(summary["partial"].get<bool>());
}

TEST(Experiments, SummaryRecomputableFromCsv) {
  ExperimentConfig cfg;
  cfg.seeds = {1, 2};
  const auto dir = scratch("perf_recompute");
  const auto r = run_perf(cfg, dir);
  // Rebuild seed 1 baseline stats from the raw report.
  std::ifstream in(dir / "perf_report.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "client_id,run_s,seed,mode,target");
  std::vector<double> runs;
  while (std::getline(in, line)) {
    const auto f = detail::split_csv_line(line);
    if (f[2] == "1" && f[3] == "baseline") runs.push_back(std::stod(f[1]));
  }
  ASSERT_EQ(runs.size(), 16u);
  const auto s = perf_metrics(runs);
  EXPECT_NEAR(s.mean, r.summary["seeds"][0]["baseline_mean_s"].get<double>(), 1e-5);
  EXPECT_NEAR(s.tail, r.summary["seeds"][0]["baseline_tail_s"].get<double>(), 1e-5);
}

TEST(Experiments, FailedCellMarksSummaryPartial) {
  ExperimentConfig cfg;
  cfg.seeds = {1};
  cfg.sysid.levels = {400, 500};  // saturated plateaus only: nothing to fit
  const auto r = run_control(cfg, scratch("partial"));
  EXPECT_TRUE(r.partial);
  EXPECT_FALSE(r.passed);
  EXPECT_FALSE(r.summary["errors"].empty());
}

TEST(Cli, RunsExperimentAndHonoursOverrides) {
  const auto dir = scratch("cli");
  EXPECT_EQ(run_cli("sweep-gains --config " QCTL_DEFAULT_CONFIG " --seed 2 --out-dir " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "sweep_gains_1_seed2.csv"));
  EXPECT_FALSE(fs::exists(dir / "sweep_gains_1_seed1.csv"));
  EXPECT_EQ(run_cli("perf --live --out-dir " + dir.string()), 2);
  EXPECT_NE(run_cli("frobnicate"), 0);
  EXPECT_EQ(run_cli("send --group 127.0.0.1 --port 5999 --bw 100"), 0);
}

}  // namespace
