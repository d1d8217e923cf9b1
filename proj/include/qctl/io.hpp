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

// Sensor / actuator / clock seams shared by the simulator and the live
// backends. Loops only ever talk to these three.

#pragma once

#include <chrono>
#include <optional>
#include <thread>

namespace qctl {

class Sensor {
 public:
  virtual ~Sensor() = default;
  /// Average dispatch-queue size since the previous read, in requests.
  /// nullopt means the reading is unusable for this tick.
  virtual std::optional<double> read() = 0;
};

class Actuator {
 public:
  virtual ~Actuator() = default;
  /// Applies a per-client bandwidth limit. Throws on failure.
  virtual void apply(double bw_mbit) = 0;
};

class Clock {
 public:
  virtual ~Clock() = default;
  /// Seconds since an arbitrary epoch.
  virtual double now() = 0;
  virtual void sleep_until(double t) = 0;
};

class WallClock final : public Clock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}

  double now() override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  void sleep_until(double t) override {
    std::this_thread::sleep_until(
        start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                     std::chrono::duration<double>(t)));
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace qctl
