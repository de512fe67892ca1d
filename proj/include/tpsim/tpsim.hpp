/* Copyright 2026 The tpsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include "tpsim/arch.hpp"
#include "tpsim/common.hpp"
#include "tpsim/dse.hpp"
#include "tpsim/graph.hpp"
#include "tpsim/hw.hpp"
#include "tpsim/pass.hpp"
#include "tpsim/perf.hpp"
#include "tpsim/report.hpp"
