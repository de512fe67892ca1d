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

// Analytical latency model and two-stream timeline simulation.
//
// Per-op latency is a roofline: the larger of compute time at peak
// throughput and memory time at the effective bandwidth, which is the L2
// bandwidth when the operand was prefetched and HBM bandwidth otherwise.
// Allreduce latency is alpha-beta over a ring.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tpsim/arch.hpp"
#include "tpsim/common.hpp"
#include "tpsim/graph.hpp"
#include "tpsim/hw.hpp"
#include "tpsim/pass.hpp"

namespace tpsim {

struct PerfOptions {
  // Transfer-volume multiplier on payload/link_bw; unset means the ring
  // allreduce factor 2(N-1)/N.
  std::optional<double> ring_factor;
  // Activation reads and writes, as a fraction of the weight/KV memory term.
  double activation_overhead = 0.10;
};

inline double ring_factor(const ClusterSpec& cluster, const PerfOptions& opts) {
  if (opts.ring_factor) return *opts.ring_factor;
  const double n = static_cast<double>(cluster.num_devices);
  return 2.0 * (n - 1.0) / n;
}

inline double op_latency(const NodeKind& node, const HardwareSpec& spec, bool resident,
                         const PerfOptions& opts = {}) {
  const double bw = resident ? spec.l2_bw : spec.hbm_bw;
  const double mem_scale = 1.0 + opts.activation_overhead;
  auto roofline = [&](Count flops, double mem_seconds) {
    return std::max(static_cast<double>(flops) / spec.peak_throughput, mem_seconds);
  };
  if (const auto* m = std::get_if<MatMul>(&node)) {
    return roofline(m->flops, mem_scale * static_cast<double>(m->weight_bytes) / bw);
  }
  if (const auto* a = std::get_if<SelfAttention>(&node)) {
    return roofline(a->flops, mem_scale * static_cast<double>(a->kv_bytes) / bw);
  }
  if (const auto* e = std::get_if<Elementwise>(&node)) {
    return roofline(e->flops, static_cast<double>(e->bytes) / spec.hbm_bw);
  }
  if (const auto* p = std::get_if<Prefetch>(&node)) {
    return static_cast<double>(p->bytes) / spec.hbm_bw;
  }
  throw ContractError("op_latency: AllReduce latency is a network cost, use allreduce_latency");
}

inline double allreduce_latency(Bytes payload, const HardwareSpec& spec,
                                const ClusterSpec& cluster, const PerfOptions& opts = {}) {
  if (cluster.num_devices <= 1) return 0.0;
  return spec.link_latency +
         ring_factor(cluster, opts) * static_cast<double>(payload) / spec.link_bw;
}

// Latency of any node, given whether its operand is L2-resident.
inline double node_latency(const NodeKind& node, const HardwareSpec& spec,
                           const ClusterSpec& cluster, bool resident,
                           const PerfOptions& opts) {
  if (const auto* ar = std::get_if<AllReduce>(&node)) {
    return allreduce_latency(ar->payload_bytes, spec, cluster, opts);
  }
  return op_latency(node, spec, resident, opts);
}

struct Interval {
  double start = 0;
  double end = 0;
  Stream stream = Stream::kMain;
  bool resident = false;
  double duration() const { return end - start; }
};

// Time spent per allreduce window: the allreduce itself, the prefetches
// charged to the window and the MAIN compute between this allreduce and the
// next.
struct WindowBreakdown {
  NodeId allreduce = 0;
  std::string label;
  double allreduce_time = 0;
  double prefetch_time = 0;
  double compute_time = 0;
};

struct Timeline {
  std::vector<Interval> intervals;  // indexed by node id
  double total = 0;
  std::vector<WindowBreakdown> windows;
  Bytes peak_residency = 0;
};

class SimulationError : public Error {
 public:
  using Error::Error;
};

namespace detail {

// Replays prefetch arrivals and consumer completions in time order; at equal
// times evictions go first.
inline Bytes peak_residency(const Graph& g, const std::vector<Interval>& iv) {
  std::vector<std::pair<double, Bytes>> events;
  for (NodeId i = 0; i < g.size(); ++i) {
    if (const auto* p = std::get_if<Prefetch>(&g.node(i).kind)) {
      events.emplace_back(iv[i].end, p->bytes);
      events.emplace_back(iv[p->target].end, -p->bytes);
    }
  }
  std::sort(events.begin(), events.end());
  Bytes used = 0;
  Bytes peak = 0;
  for (const auto& [t, delta] : events) {
    used += delta;
    peak = std::max(peak, used);
  }
  return peak;
}

inline std::vector<WindowBreakdown> window_breakdown(const Graph& g,
                                                     const std::vector<NodeId>& order,
                                                     const std::vector<Interval>& iv) {
  std::vector<WindowBreakdown> windows;
  std::vector<std::optional<std::size_t>> window_of(g.size());
  std::optional<std::size_t> current;
  for (NodeId id : order) {
    const Node& n = g.node(id);
    if (n.stream != Stream::kMain) continue;
    if (holds<AllReduce>(n.kind)) {
      windows.push_back({id, n.label, iv[id].duration(), 0, 0});
      current = windows.size() - 1;
    } else if (current) {
      windows[*current].compute_time += iv[id].duration();
    }
    window_of[id] = current;
  }
  for (NodeId id = 0; id < g.size(); ++id) {
    if (const auto* p = std::get_if<Prefetch>(&g.node(id).kind)) {
      if (auto w = window_of[p->target]) windows[*w].prefetch_time += iv[id].duration();
    }
  }
  return windows;
}

}  // namespace detail

// List scheduling: each stream runs its nodes in global topological order;
// a node starts once its stream is free and all its producers have ended.
// A MatMul/SelfAttention whose prefetch has completed reads at L2 bandwidth,
// and its L2 entry is released when it ends.
inline Timeline simulate_layer(const Graph& graph, const HardwareSpec& spec,
                               const ClusterSpec& cluster, const PerfOptions& opts = {}) {
  const std::vector<NodeId> order = topo_order(graph);
  std::vector<std::optional<NodeId>> prefetch_of(graph.size());
  for (NodeId i = 0; i < graph.size(); ++i) {
    if (const auto* p = std::get_if<Prefetch>(&graph.node(i).kind)) prefetch_of[p->target] = i;
  }

  Timeline tl;
  tl.intervals.resize(graph.size());
  std::vector<bool> finished(graph.size(), false);
  double stream_free[kNumStreams] = {0, 0};
  for (NodeId id : order) {
    const Node& n = graph.node(id);
    double start = stream_free[static_cast<std::size_t>(n.stream)];
    for (NodeId p : graph.predecessors(id)) start = std::max(start, tl.intervals[p].end);
    bool resident = false;
    if (prefetch_of[id]) {
      const NodeId p = *prefetch_of[id];
      resident = finished[p] && tl.intervals[p].end <= start;
    }
    const double end = start + node_latency(n.kind, spec, cluster, resident, opts);
    tl.intervals[id] = Interval{start, end, n.stream, resident};
    stream_free[static_cast<std::size_t>(n.stream)] = end;
    finished[id] = true;
    tl.total = std::max(tl.total, end);
  }
  tl.peak_residency = detail::peak_residency(graph, tl.intervals);
  if (tl.peak_residency > spec.l2_capacity) {
    throw SimulationError("L2 residency " + std::to_string(tl.peak_residency) +
                          " bytes exceeds capacity " + std::to_string(spec.l2_capacity));
  }
  tl.windows = detail::window_breakdown(graph, order, tl.intervals);
  return tl;
}

// ---------------------------------------------------------------------------
// End-to-end latency
// ---------------------------------------------------------------------------

struct WindowAverages {
  double allreduce_us = 0;
  double prefetch_us = 0;
  double compute_us = 0;
};

struct LatencyBreakdown {
  bool feasible = false;
  Feasibility capacity;
  double total = 0;    // seconds, whole model
  double prefill = 0;  // seconds, all layers
  double decode = 0;   // seconds, all layers and decode steps
  // Per-decode-step, per-layer window times averaged over the decode phase.
  WindowAverages attn;
  WindowAverages ffn;
};

inline constexpr Count kDecodeSamplePoints = 16;

struct LayerEval {
  double latency = 0;
  WindowAverages attn;
  WindowAverages ffn;
};

inline LayerEval evaluate_layer(const Graph& layer, const HardwareSpec& spec,
                                const ClusterSpec& cluster, bool prefetch_enabled,
                                const PerfOptions& opts) {
  const PassResult pass =
      insert_prefetch_ops(layer, PassConfig{spec.l2_capacity, prefetch_enabled});
  const Timeline tl = simulate_layer(pass.graph, spec, cluster, opts);
  LayerEval out;
  out.latency = tl.total;
  for (const auto& w : tl.windows) {
    WindowAverages avg{w.allreduce_time * 1e6, w.prefetch_time * 1e6, w.compute_time * 1e6};
    if (w.label == "allreduce.attn") out.attn = avg;
    if (w.label == "allreduce.mlp") out.ffn = avg;
  }
  return out;
}

// Prefill of the whole prompt, then one decode step per generated token.
// Decode cost varies smoothly with the KV length, so for long generations
// it is sampled at 16 evenly spaced steps and summed with the trapezoid
// rule plus the endpoint correction, which is exact for linear costs.
inline LatencyBreakdown end_to_end_latency(const ModelConfig& model,
                                           const ClusterSpec& cluster,
                                           const HardwareSpec& spec,
                                           const Workload& workload, bool prefetch_enabled,
                                           const PerfOptions& opts = {},
                                           ShardPolicy policy = ShardPolicy::kExact) {
  LatencyBreakdown out;
  out.capacity = check_capacity(model, cluster, workload, spec, policy);
  out.feasible = out.capacity.feasible;
  if (!out.feasible) {
    out.total = out.prefill = out.decode = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  if (workload.prefill_len < 1 || workload.decode_len < 1) {
    throw ContractError("end_to_end_latency: prefill and decode lengths must be >= 1");
  }
  const ShardedModel s = shard(model, cluster.num_devices, policy);
  const double layers = static_cast<double>(model.num_layers);

  out.prefill = layers * evaluate_layer(build_prefill_layer(s, workload.batch,
                                                            workload.prefill_len),
                                        spec, cluster, prefetch_enabled, opts)
                             .latency;

  const Count steps = workload.decode_len;
  auto decode_step = [&](Count step) {
    return evaluate_layer(build_decode_layer(s, workload.batch, workload.prefill_len + step),
                          spec, cluster, prefetch_enabled, opts);
  };
  // Points (step, weight) such that sum_i f(i) ~= sum_k weight_k * f(step_k).
  std::vector<std::pair<Count, double>> quad;
  if (steps <= kDecodeSamplePoints) {
    for (Count i = 1; i <= steps; ++i) quad.emplace_back(i, 1.0);
  } else {
    std::vector<Count> x;
    for (Count k = 0; k < kDecodeSamplePoints; ++k) {
      x.push_back(1 + std::llround(static_cast<double>(steps - 1) * static_cast<double>(k) /
                                   static_cast<double>(kDecodeSamplePoints - 1)));
    }
    std::vector<double> w(x.size(), 0.0);
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
      const double h = static_cast<double>(x[k + 1] - x[k]);
      w[k] += h / 2;
      w[k + 1] += h / 2;
    }
    w.front() += 0.5;
    w.back() += 0.5;
    for (std::size_t k = 0; k < x.size(); ++k) quad.emplace_back(x[k], w[k]);
  }
  double decode_layer_sum = 0;
  for (const auto& [step, weight] : quad) {
    const LayerEval e = decode_step(step);
    decode_layer_sum += weight * e.latency;
    const double share = weight / static_cast<double>(steps);
    out.attn.allreduce_us += share * e.attn.allreduce_us;
    out.attn.prefetch_us += share * e.attn.prefetch_us;
    out.attn.compute_us += share * e.attn.compute_us;
    out.ffn.allreduce_us += share * e.ffn.allreduce_us;
    out.ffn.prefetch_us += share * e.ffn.prefetch_us;
    out.ffn.compute_us += share * e.ffn.compute_us;
  }
  out.decode = layers * decode_layer_sum;
  out.total = out.prefill + out.decode;
  return out;
}

}  // namespace tpsim
