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

// Design-space exploration: hardware parameter sweeps over a model/workload
// grid, speedup of prefetching over the baseline, and throughput density
// (generated tokens/s per mm^2 of silicon).

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "tpsim/arch.hpp"
#include "tpsim/common.hpp"
#include "tpsim/hw.hpp"
#include "tpsim/perf.hpp"

namespace tpsim {

inline constexpr double kGbps = 1e9 / 8;  // bytes/s per Gbit/s
inline constexpr double kTops = 1e12;
inline constexpr double kTBps = 1e12;

struct SweepSpec {
  std::vector<ModelConfig> models;
  std::vector<Workload> workloads;
  Count num_devices = 32;
  // Uneven head counts are padded by default so every catalog model can be
  // placed on every cluster size.
  ShardPolicy policy = ShardPolicy::kPadded;
  PerfOptions perf;
  unsigned threads = 0;  // 0: hardware concurrency
};

// batch in {8,16,24,32} x max sequence length in {2k,4k,8k,16k}.
inline std::vector<Workload> default_workload_grid() {
  std::vector<Workload> grid;
  for (Count batch : {8, 16, 24, 32}) {
    for (Count seq : {2048, 4096, 8192, 16384}) grid.push_back(make_workload(batch, seq));
  }
  return grid;
}

inline SweepSpec default_sweep_spec() {
  SweepSpec s;
  s.models = builtin_catalog();
  s.workloads = default_workload_grid();
  return s;
}

struct SweepRow {
  std::string model;
  Count batch = 0;
  Count seq_len = 0;
  Count tp = 0;
  double l2_mb = 0;
  double link_gbps = 0;
  double tops = 0;
  double l2_tbps = 0;
  bool feasible = false;
  bool evenly_sharded = true;
  double latency_base_s = 0;
  double latency_prefetch_s = 0;
  double speedup = 0;
  double tokens_per_s = 0;       // prefetch enabled
  double tokens_per_s_base = 0;
  double die_area_mm2 = 0;       // one die
  double density = 0;            // tokens_per_s / (die_area * tp)
  double density_base = 0;
  double density_per_device = 0; // tokens_per_s / die_area
  WindowAverages attn;           // prefetch-enabled decode windows
  WindowAverages ffn;
};

struct AggregatePoint {
  double l2_mb = 0;
  Count tp = 0;
  double link_gbps = 0;
  double tops = 0;
  double l2_tbps = 0;
  std::size_t feasible_points = 0;
  double mean_latency_base_s = 0;
  double mean_latency_prefetch_s = 0;
  double mean_speedup = 0;
  double mean_density = 0;
  double mean_density_base = 0;
  double normalized_mean_latency = 0;  // sweep_l2 only
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<AggregatePoint> aggregates;  // one per design point, sweep order
  // sweep_l2 only: model -> mean latency over its feasible workloads,
  // normalized to the smallest L2; one entry per L2 value.
  std::map<std::string, std::vector<double>> normalized_by_model;
};

class SweepError : public Error {
 public:
  using Error::Error;
};

inline void require_increasing(const std::vector<double>& values, const char* what) {
  if (values.empty()) throw SweepError(std::string(what) + ": value list is empty");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] > values[i - 1])) {
      throw SweepError(std::string(what) + ": values must be strictly increasing");
    }
  }
}

inline SweepRow evaluate_point(const ModelConfig& model, const Workload& workload,
                               const HardwareSpec& spec, Count num_devices,
                               ShardPolicy policy, const PerfOptions& perf) {
  SweepRow row;
  row.model = model.name;
  row.batch = workload.batch;
  row.seq_len = workload.max_seq_len;
  row.tp = num_devices;
  row.l2_mb = l2_megabytes(spec);
  row.link_gbps = spec.link_bw / kGbps;
  row.tops = spec.peak_throughput / kTops;
  row.l2_tbps = spec.l2_bw / kTBps;
  row.die_area_mm2 = die_area(spec);
  const ClusterSpec cluster{num_devices};
  try {
    row.evenly_sharded = shard(model, num_devices, ShardPolicy::kPadded).evenly_divided;
  } catch (const ShardError&) {
    row.evenly_sharded = false;
  }
  if (policy == ShardPolicy::kExact && !row.evenly_sharded) return row;

  const LatencyBreakdown base =
      end_to_end_latency(model, cluster, spec, workload, false, perf, policy);
  if (!base.feasible) return row;
  const LatencyBreakdown pre =
      end_to_end_latency(model, cluster, spec, workload, true, perf, policy);
  row.feasible = true;
  row.latency_base_s = base.total;
  row.latency_prefetch_s = pre.total;
  row.speedup = base.total / pre.total;
  const double tokens = static_cast<double>(workload.batch * workload.decode_len);
  row.tokens_per_s = tokens / pre.total;
  row.tokens_per_s_base = tokens / base.total;
  const double silicon = row.die_area_mm2 * static_cast<double>(num_devices);
  row.density = row.tokens_per_s / silicon;
  row.density_base = row.tokens_per_s_base / silicon;
  row.density_per_device = row.tokens_per_s / row.die_area_mm2;
  row.attn = pre.attn;
  row.ffn = pre.ffn;
  return row;
}

namespace detail {

struct PointTask {
  const ModelConfig* model;
  Workload workload;
  HardwareSpec spec;
  Count num_devices;
};

// Evaluates independent points on a small thread pool; results keep task
// order.
inline std::vector<SweepRow> evaluate_all(const std::vector<PointTask>& tasks,
                                          const SweepSpec& sweep) {
  std::vector<SweepRow> rows(tasks.size());
  unsigned threads = sweep.threads ? sweep.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(tasks.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const auto& t = tasks[i];
      rows[i] = evaluate_point(*t.model, t.workload, t.spec, t.num_devices, sweep.policy,
                               sweep.perf);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return rows;
}

inline AggregatePoint aggregate(const std::vector<SweepRow>& rows, std::size_t begin,
                                std::size_t end) {
  AggregatePoint a;
  if (begin < end) {
    const SweepRow& r0 = rows[begin];
    a.l2_mb = r0.l2_mb;
    a.tp = r0.tp;
    a.link_gbps = r0.link_gbps;
    a.tops = r0.tops;
    a.l2_tbps = r0.l2_tbps;
  }
  for (std::size_t i = begin; i < end; ++i) {
    const SweepRow& r = rows[i];
    if (!r.feasible) continue;
    ++a.feasible_points;
    a.mean_latency_base_s += r.latency_base_s;
    a.mean_latency_prefetch_s += r.latency_prefetch_s;
    a.mean_speedup += r.speedup;
    a.mean_density += r.density;
    a.mean_density_base += r.density_base;
  }
  if (a.feasible_points > 0) {
    const double n = static_cast<double>(a.feasible_points);
    a.mean_latency_base_s /= n;
    a.mean_latency_prefetch_s /= n;
    a.mean_speedup /= n;
    a.mean_density /= n;
    a.mean_density_base /= n;
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    a.mean_latency_base_s = a.mean_latency_prefetch_s = a.mean_speedup = nan;
    a.mean_density = a.mean_density_base = nan;
  }
  return a;
}

// Rows are laid out design point by design point, each block holding
// models x workloads.
inline SweepResult run_blocks(std::vector<PointTask> tasks, std::size_t block,
                              const SweepSpec& sweep) {
  SweepResult result;
  result.rows = evaluate_all(tasks, sweep);
  for (std::size_t b = 0; b < result.rows.size(); b += block) {
    result.aggregates.push_back(aggregate(result.rows, b, b + block));
  }
  return result;
}

inline void require_grid(const SweepSpec& sweep) {
  if (sweep.models.empty()) throw SweepError("no models selected");
  if (sweep.workloads.empty()) throw SweepError("no workloads selected");
}

}  // namespace detail

// Latency vs. L2 capacity (values in MiB), prefetch enabled and disabled.
inline SweepResult sweep_l2(const HardwareSpec& tmpl, const SweepSpec& sweep,
                            const std::vector<double>& l2_mb) {
  require_increasing(l2_mb, "l2_mb");
  detail::require_grid(sweep);
  std::vector<detail::PointTask> tasks;
  for (double mb : l2_mb) {
    HardwareSpec spec = tmpl;
    spec.l2_capacity = static_cast<Bytes>(std::llround(mb * static_cast<double>(kMiB)));
    for (const auto& m : sweep.models) {
      for (const auto& w : sweep.workloads) tasks.push_back({&m, w, spec, sweep.num_devices});
    }
  }
  const std::size_t block = sweep.models.size() * sweep.workloads.size();
  SweepResult result = detail::run_blocks(std::move(tasks), block, sweep);

  // Mean latency over the workload grid, normalized to the smallest L2:
  // per model, and over every (model, workload) pair for the aggregate.
  const std::size_t nw = sweep.workloads.size();
  for (std::size_t m = 0; m < sweep.models.size(); ++m) {
    std::vector<double> curve(l2_mb.size(), 0.0);
    for (std::size_t v = 0; v < l2_mb.size(); ++v) {
      curve[v] = detail::aggregate(result.rows, v * block + m * nw, v * block + (m + 1) * nw)
                     .mean_latency_prefetch_s;
    }
    const double first = curve.front();
    for (double& c : curve) c /= first;
    result.normalized_by_model[sweep.models[m].name] = std::move(curve);
  }
  const double first = result.aggregates.front().mean_latency_prefetch_s;
  for (auto& a : result.aggregates) {
    a.normalized_mean_latency = a.mean_latency_prefetch_s / first;
  }
  return result;
}

struct DensityOptimum {
  double l2_mb = 0;
  double density = 0;
};

struct OptimalL2 {
  DensityOptimum with_prefetch;
  DensityOptimum without_prefetch;
  double density_ratio = 0;
};

// Argmax of the aggregate density over an L2 sweep, with and without
// prefetching. Ties resolve to the smaller L2.
inline OptimalL2 optimal_l2(const SweepResult& l2_sweep) {
  OptimalL2 best;
  best.with_prefetch.density = -1;
  best.without_prefetch.density = -1;
  for (const auto& a : l2_sweep.aggregates) {
    if (a.feasible_points == 0) continue;
    if (a.mean_density > best.with_prefetch.density) {
      best.with_prefetch = {a.l2_mb, a.mean_density};
    }
    if (a.mean_density_base > best.without_prefetch.density) {
      best.without_prefetch = {a.l2_mb, a.mean_density_base};
    }
  }
  if (best.with_prefetch.density < 0) throw SweepError("no feasible design point");
  best.density_ratio = best.with_prefetch.density / best.without_prefetch.density;
  return best;
}

inline OptimalL2 optimal_l2(const HardwareSpec& tmpl, const SweepSpec& sweep,
                            const std::vector<double>& l2_mb) {
  for (std::size_t i = 1; i < l2_mb.size(); ++i) {
    if (l2_mb[i] - l2_mb[i - 1] > 8.0 + 1e-9) {
      throw SweepError("optimal_l2: L2 grid step must be <= 8 MB");
    }
  }
  return optimal_l2(sweep_l2(tmpl, sweep, l2_mb));
}

// Speedup vs. tensor-parallel cluster size for one model. With the exact
// policy, sizes that do not divide the model are reported infeasible.
inline SweepResult sweep_cluster(const HardwareSpec& spec, const SweepSpec& sweep,
                                 const std::vector<double>& sizes) {
  require_increasing(sizes, "cluster sizes");
  detail::require_grid(sweep);
  std::vector<detail::PointTask> tasks;
  for (double n : sizes) {
    if (n < 1 || n != std::floor(n)) throw SweepError("cluster sizes must be positive integers");
    for (const auto& m : sweep.models) {
      for (const auto& w : sweep.workloads) tasks.push_back({&m, w, spec, static_cast<Count>(n)});
    }
  }
  return detail::run_blocks(std::move(tasks), sweep.models.size() * sweep.workloads.size(),
                            sweep);
}

// Speedup vs. link bandwidth (values in Gbit/s).
inline SweepResult sweep_bandwidth(const HardwareSpec& tmpl, const SweepSpec& sweep,
                                   const std::vector<double>& link_gbps) {
  require_increasing(link_gbps, "link_gbps");
  detail::require_grid(sweep);
  std::vector<detail::PointTask> tasks;
  for (double gbps : link_gbps) {
    HardwareSpec spec = tmpl;
    spec.link_bw = gbps * kGbps;
    validate(spec);
    for (const auto& m : sweep.models) {
      for (const auto& w : sweep.workloads) tasks.push_back({&m, w, spec, sweep.num_devices});
    }
  }
  return detail::run_blocks(std::move(tasks), sweep.models.size() * sweep.workloads.size(),
                            sweep);
}

// Speedup over the (peak throughput x L2 bandwidth) grid; aggregates are
// ordered L2-bandwidth-major.
inline SweepResult sweep_compute_l2bw(const HardwareSpec& tmpl, const SweepSpec& sweep,
                                      const std::vector<double>& tops,
                                      const std::vector<double>& l2_tbps) {
  require_increasing(tops, "tops");
  require_increasing(l2_tbps, "l2_tbps");
  detail::require_grid(sweep);
  std::vector<detail::PointTask> tasks;
  for (double bw : l2_tbps) {
    for (double t : tops) {
      HardwareSpec spec = tmpl;
      spec.l2_bw = bw * kTBps;
      spec.peak_throughput = t * kTops;
      validate(spec);
      for (const auto& m : sweep.models) {
        for (const auto& w : sweep.workloads) tasks.push_back({&m, w, spec, sweep.num_devices});
      }
    }
  }
  return detail::run_blocks(std::move(tasks), sweep.models.size() * sweep.workloads.size(),
                            sweep);
}

}  // namespace tpsim
