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

// Exhaustive event-driven reference for simulate_layer, used as a test
// oracle on small graphs.
//
// The simulation advances a global clock from event to event. Whenever
// several stream heads are dispatchable at the same instant it explores every
// dispatch order, and requires all explored schedules to agree. It shares
// only the per-op cost functions with the list scheduler.

#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <vector>

#include "tpsim/graph.hpp"
#include "tpsim/hw.hpp"
#include "tpsim/perf.hpp"

namespace tpsim {

inline constexpr std::size_t kBruteForceNodeCap = 12;

namespace detail {

struct OracleState {
  double clock = 0;
  std::vector<bool> started;
  std::vector<double> start;
  std::vector<double> end;
  std::vector<bool> resident;
  std::size_t next[kNumStreams] = {0, 0};
  double busy_until[kNumStreams] = {0, 0};
};

class Oracle {
 public:
  Oracle(const Graph& g, const HardwareSpec& spec, const ClusterSpec& cluster,
         const PerfOptions& opts)
      : g_(g), spec_(spec), cluster_(cluster), opts_(opts), prefetch_of_(g.size()) {
    // Smallest-id-first linearization, computed by repeated scanning.
    std::vector<bool> placed(g.size(), false);
    for (std::size_t round = 0; round < g.size(); ++round) {
      std::optional<NodeId> pick;
      for (NodeId i = 0; i < g.size() && !pick; ++i) {
        if (placed[i]) continue;
        bool ready = true;
        for (NodeId p : g.predecessors(i)) ready = ready && placed[p];
        if (ready) pick = i;
      }
      if (!pick) throw GraphError("brute_force_schedule: graph has a cycle");
      placed[*pick] = true;
      stream_order_[static_cast<std::size_t>(g.node(*pick).stream)].push_back(*pick);
    }
    for (NodeId i = 0; i < g.size(); ++i) {
      if (const auto* p = std::get_if<Prefetch>(&g.node(i).kind)) prefetch_of_[p->target] = i;
    }
  }

  Timeline run() {
    OracleState s;
    s.started.assign(g_.size(), false);
    s.start.assign(g_.size(), 0);
    s.end.assign(g_.size(), 0);
    s.resident.assign(g_.size(), false);
    explore(s);
    return *result_;
  }

 private:
  std::optional<NodeId> dispatchable(const OracleState& s, std::size_t stream) const {
    const auto& order = stream_order_[stream];
    if (s.next[stream] >= order.size() || s.busy_until[stream] > s.clock) return std::nullopt;
    const NodeId head = order[s.next[stream]];
    for (NodeId p : g_.predecessors(head)) {
      if (!s.started[p] || s.end[p] > s.clock) return std::nullopt;
    }
    return head;
  }

  void explore(OracleState s) {
    std::vector<NodeId> ready;
    for (std::size_t st = 0; st < kNumStreams; ++st) {
      if (auto h = dispatchable(s, st)) ready.push_back(*h);
    }
    if (!ready.empty()) {
      for (NodeId n : ready) {
        OracleState branch = s;
        const auto st = static_cast<std::size_t>(g_.node(n).stream);
        bool resident = false;
        if (auto p = prefetch_of_[n]) resident = branch.started[*p] && branch.end[*p] <= s.clock;
        branch.started[n] = true;
        branch.resident[n] = resident;
        branch.start[n] = s.clock;
        branch.end[n] = s.clock + node_latency(g_.node(n).kind, spec_, cluster_, resident, opts_);
        branch.busy_until[st] = branch.end[n];
        ++branch.next[st];
        explore(std::move(branch));
      }
      return;
    }
    if (std::all_of(s.started.begin(), s.started.end(), [](bool b) { return b; })) {
      record(s);
      return;
    }
    double next_event = std::numeric_limits<double>::infinity();
    for (NodeId i = 0; i < g_.size(); ++i) {
      if (s.started[i] && s.end[i] > s.clock) next_event = std::min(next_event, s.end[i]);
    }
    if (next_event == std::numeric_limits<double>::infinity()) {
      throw SimulationError("brute_force_schedule: deadlock between streams");
    }
    s.clock = next_event;
    explore(std::move(s));
  }

  void record(const OracleState& s) {
    Timeline tl;
    tl.intervals.resize(g_.size());
    for (NodeId i = 0; i < g_.size(); ++i) {
      tl.intervals[i] = Interval{s.start[i], s.end[i], g_.node(i).stream, s.resident[i]};
      tl.total = std::max(tl.total, s.end[i]);
    }
    // Residency sweep over arrival (+) and release (-) instants.
    std::vector<double> instants;
    for (NodeId i = 0; i < g_.size(); ++i) {
      if (holds<Prefetch>(g_.node(i).kind)) instants.push_back(s.end[i]);
    }
    for (double t : instants) {
      Bytes used = 0;
      for (NodeId i = 0; i < g_.size(); ++i) {
        if (const auto* p = std::get_if<Prefetch>(&g_.node(i).kind)) {
          if (s.end[i] <= t && s.end[p->target] > t) used += p->bytes;
        }
      }
      tl.peak_residency = std::max(tl.peak_residency, used);
    }
    if (tl.peak_residency > spec_.l2_capacity) {
      throw SimulationError("brute_force_schedule: L2 residency exceeds capacity");
    }
    if (!result_) {
      result_ = std::move(tl);
      return;
    }
    for (NodeId i = 0; i < g_.size(); ++i) {
      if (result_->intervals[i].start != tl.intervals[i].start ||
          result_->intervals[i].end != tl.intervals[i].end) {
        throw SimulationError("brute_force_schedule: dispatch order changed the schedule of '" +
                              g_.node(i).label + "'");
      }
    }
  }

  const Graph& g_;
  const HardwareSpec& spec_;
  const ClusterSpec& cluster_;
  const PerfOptions& opts_;
  std::vector<std::optional<NodeId>> prefetch_of_;
  std::vector<NodeId> stream_order_[kNumStreams];
  std::optional<Timeline> result_;
};

}  // namespace detail

inline Timeline brute_force_schedule(const Graph& graph, const HardwareSpec& spec,
                                     const ClusterSpec& cluster, const PerfOptions& opts = {}) {
  if (graph.size() > kBruteForceNodeCap) {
    throw ContractError("brute_force_schedule: graph has " + std::to_string(graph.size()) +
                        " nodes, cap is " + std::to_string(kBruteForceNodeCap));
  }
  if (graph.empty()) return Timeline{};
  return detail::Oracle(graph, spec, cluster, opts).run();
}

}  // namespace tpsim
