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

#include <stdexcept>
#include <string>
#include <utility>

namespace qctl {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or domain invariant was violated by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Not enough usable data left to identify a model.
class IdentificationInfeasible : public Error {
 public:
  using Error::Error;
};

/// The regression problem lacks excitation in one of its regressors.
class RankDeficient : public Error {
 public:
  using Error::Error;
};

/// Malformed block-stat line. `token()` is the offending input fragment.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string token)
      : Error(what), token_(std::move(token)) {}
  const std::string& token() const noexcept { return token_; }

 private:
  std::string token_;
};

/// A monotonic kernel counter went backwards (device reset or wrap).
class CounterWrap : public Error {
 public:
  using Error::Error;
};

/// A simulation exceeded its time cap.
class SimulationTimeout : public Error {
 public:
  using Error::Error;
};

/// Sensor, actuator or socket failure on the live path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace qctl
