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

#include "qctl/adapters.hpp"
#include "qctl/config.hpp"
#include "qctl/controller.hpp"
#include "qctl/error.hpp"
#include "qctl/experiment.hpp"
#include "qctl/io.hpp"
#include "qctl/metrics.hpp"
#include "qctl/model.hpp"
#include "qctl/multicast.hpp"
#include "qctl/plant.hpp"
#include "qctl/protocol.hpp"
#include "qctl/sysid.hpp"
#include "qctl/trace.hpp"
