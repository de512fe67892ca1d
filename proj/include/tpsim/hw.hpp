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

// Accelerator design point and its silicon-area cost model.

#pragma once

#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"
#include "tpsim/arch.hpp"
#include "tpsim/common.hpp"

namespace tpsim {

// All rates in SI base units: ops/s, bytes/s, seconds, mm^2, watts.
struct HardwareSpec {
  double peak_throughput = 800e12;
  double throughput_per_core = 1.84e12;
  double area_per_core = 1.34;
  double area_per_mb_l2 = 0.36;
  Bytes hbm_capacity = 64 * kGiB;
  double hbm_bw = 1.84e12;
  Bytes l2_capacity = 0;  // chosen per design point
  double l2_bw = 12e12;
  double link_bw = 200e9 / 8;
  double link_latency = 25e-6;
  double power_per_core = 0.526;

  friend bool operator==(const HardwareSpec&, const HardwareSpec&) = default;
};

enum class Topology { kRing };

struct ClusterSpec {
  Count num_devices = 1;
  Topology topology = Topology::kRing;
};

inline HardwareSpec default_spec() { return HardwareSpec{}; }

inline void validate(const HardwareSpec& s) {
  const std::pair<const char*, double> positive[] = {
      {"throughput", s.peak_throughput},
      {"throughput_per_core", s.throughput_per_core},
      {"area_per_core", s.area_per_core},
      {"area_per_1mb_l2_sram", s.area_per_mb_l2},
      {"hbm_capacity", static_cast<double>(s.hbm_capacity)},
      {"hbm_bandwidth", s.hbm_bw},
      {"l2_bus_bandwidth", s.l2_bw},
      {"interconnect_bandwidth", s.link_bw},
      {"interconnect_latency", s.link_latency},
      {"power_consumption_per_core", s.power_per_core},
  };
  for (const auto& [field, value] : positive) {
    if (!(value > 0) || !std::isfinite(value)) {
      throw ConfigError(field, "must be a positive finite number");
    }
  }
  if (s.l2_capacity < 0) throw ConfigError("l2_capacity", "must be >= 0");
  if (s.l2_bw < s.hbm_bw) {
    throw ConfigError("l2_bus_bandwidth", "must not be below hbm_bandwidth");
  }
}

inline void validate(const ClusterSpec& c) {
  if (c.num_devices < 1) throw ConfigError("num_devices", "must be >= 1");
}

// The core count is not a design input; it is implied by the total and
// per-core throughput.
inline Count num_cores(const HardwareSpec& s) {
  return static_cast<Count>(std::ceil(s.peak_throughput / s.throughput_per_core - 1e-9));
}

inline double l2_megabytes(const HardwareSpec& s) {
  return static_cast<double>(s.l2_capacity) / static_cast<double>(kMiB);
}

inline double die_area(const HardwareSpec& s) {
  return static_cast<double>(num_cores(s)) * s.area_per_core +
         l2_megabytes(s) * s.area_per_mb_l2;
}

struct Feasibility {
  bool feasible = false;
  Bytes required_bytes = 0;  // weights + full-length KV-cache, per device
  Bytes hbm_capacity = 0;
};

inline Feasibility check_capacity(const ModelConfig& model, const ClusterSpec& cluster,
                                  const Workload& workload, const HardwareSpec& spec,
                                  ShardPolicy policy = ShardPolicy::kExact) {
  const ShardedModel s = shard(model, cluster.num_devices, policy);
  const FootprintReport f = layer_footprint(s, workload);
  Feasibility out;
  out.required_bytes =
      f.total_model_bytes_per_device + model.num_layers * f.kv_cache_bytes;
  out.hbm_capacity = spec.hbm_capacity;
  out.feasible = out.required_bytes <= spec.hbm_capacity;
  return out;
}

// Keys follow the hardware parameter names in snake_case.
inline void to_json(nlohmann::json& j, const HardwareSpec& s) {
  j = nlohmann::json{{"tech_node_nm", 7},
                     {"area_per_core", s.area_per_core},
                     {"area_per_1mb_l2_sram", s.area_per_mb_l2},
                     {"throughput_per_core", s.throughput_per_core},
                     {"power_consumption_per_core", s.power_per_core},
                     {"throughput", s.peak_throughput},
                     {"hbm_capacity", s.hbm_capacity},
                     {"hbm_bandwidth", s.hbm_bw},
                     {"l2_capacity", s.l2_capacity},
                     {"l2_bus_bandwidth", s.l2_bw},
                     {"interconnect_bandwidth", s.link_bw},
                     {"interconnect_latency", s.link_latency}};
}

// Missing keys keep the values of `base`.
inline HardwareSpec hardware_spec_from_json(const nlohmann::json& j,
                                            HardwareSpec base = default_spec()) {
  if (!j.is_object()) throw ConfigError("<root>", "expected a JSON object");
  auto number = [&](const char* key, double& dst) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number()) throw ConfigError(key, "expected a number");
    dst = it->get<double>();
  };
  auto bytes = [&](const char* key, Bytes& dst) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number_integer()) throw ConfigError(key, "expected an integer byte count");
    dst = it->get<Bytes>();
  };
  number("area_per_core", base.area_per_core);
  number("area_per_1mb_l2_sram", base.area_per_mb_l2);
  number("throughput_per_core", base.throughput_per_core);
  number("power_consumption_per_core", base.power_per_core);
  number("throughput", base.peak_throughput);
  bytes("hbm_capacity", base.hbm_capacity);
  number("hbm_bandwidth", base.hbm_bw);
  bytes("l2_capacity", base.l2_capacity);
  number("l2_bus_bandwidth", base.l2_bw);
  number("interconnect_bandwidth", base.link_bw);
  number("interconnect_latency", base.link_latency);
  validate(base);
  return base;
}

inline HardwareSpec load_hardware_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open hardware spec");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, std::string("malformed JSON: ") + e.what());
  }
  return hardware_spec_from_json(j);
}

}  // namespace tpsim
