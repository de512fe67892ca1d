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

// Prefetch operator insertion.
//
// For every allreduce the pass walks the allreduce's descendants breadth
// first until it meets the next allreduce or runs out of graph. Each MatMul
// or SelfAttention met on the way adds its weight or KV-cache size to a
// running sum; while the sum stays strictly below the L2 capacity a Prefetch
// node for that operand is placed on the prefetch stream. The first node that
// pushes the sum to the capacity or beyond closes the window.
//
// A prefetch may start as soon as its allreduce may start: it depends on the
// allreduce's producers, never on the allreduce itself, and its target
// depends on it.

#pragma once

#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "tpsim/common.hpp"
#include "tpsim/graph.hpp"

namespace tpsim {

struct PassConfig {
  Bytes l2_capacity = 0;
  bool enabled = true;
};

enum class StopReason { kNextAllReduce, kEndOfGraph, kBudget };

inline const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::kNextAllReduce:
      return "next-allreduce";
    case StopReason::kEndOfGraph:
      return "end-of-graph";
    case StopReason::kBudget:
      return "budget";
  }
  return "?";
}

struct PrefetchWindow {
  NodeId allreduce = 0;
  std::vector<NodeId> targets;         // prefetched nodes, BFS order
  std::vector<NodeId> prefetch_nodes;  // inserted Prefetch node ids
  Bytes cache_sum = 0;                 // bytes of the inserted prefetches
  StopReason stopped = StopReason::kEndOfGraph;
};

struct PassReport {
  std::vector<PrefetchWindow> windows;
};

struct PassResult {
  Graph graph;
  PassReport report;
};

class PassError : public Error {
 public:
  using Error::Error;
};

// Bytes a node pulls from off-chip memory: weights for a MatMul, the
// KV-cache for SelfAttention.
inline Bytes mem_size(const NodeKind& kind) {
  if (const auto* m = std::get_if<MatMul>(&kind)) return m->weight_bytes;
  if (const auto* a = std::get_if<SelfAttention>(&kind)) return a->kv_bytes;
  throw ContractError(std::string("mem_size: expected MatMul or SelfAttention, got ") +
                      kind_name(kind));
}

inline bool is_prefetchable(const NodeKind& kind) {
  return holds<MatMul>(kind) || holds<SelfAttention>(kind);
}

inline PassResult insert_prefetch_ops(const Graph& graph, const PassConfig& cfg) {
  if (cfg.l2_capacity < 0) throw PassError("l2_capacity must be >= 0");
  for (const Node& n : graph.nodes()) {
    if (holds<Prefetch>(n.kind)) {
      throw PassError("graph already contains prefetch node '" + n.label + "'");
    }
  }
  PassResult result{graph, {}};
  if (!cfg.enabled) return result;

  Graph& out = result.graph;
  std::set<NodeId> prefetched;
  for (NodeId op : topo_order(graph)) {
    if (!holds<AllReduce>(graph.node(op).kind)) continue;
    PrefetchWindow window;
    window.allreduce = op;
    Bytes cache_sum = 0;
    std::deque<NodeId> queue(graph.successors(op).begin(), graph.successors(op).end());
    std::set<NodeId> seen(queue.begin(), queue.end());
    bool done = false;
    while (!done) {
      if (queue.empty()) {
        window.stopped = StopReason::kEndOfGraph;
        break;
      }
      const NodeId n = queue.front();
      queue.pop_front();
      const NodeKind& kind = graph.node(n).kind;
      if (holds<AllReduce>(kind)) {
        window.stopped = StopReason::kNextAllReduce;
        break;
      }
      if (is_prefetchable(kind)) {
        const Bytes size = mem_size(kind);
        cache_sum += size;
        if (cache_sum < cfg.l2_capacity) {
          // A node reachable from two allreduces is fetched once, by the
          // first window that reaches it.
          if (prefetched.insert(n).second) {
            const NodeId p = out.add_node(Prefetch{n, size},
                                          "prefetch." + graph.node(n).label,
                                          Stream::kPrefetch);
            for (NodeId anchor : graph.predecessors(op)) out.add_edge(anchor, p);
            out.add_edge(p, n);
            window.targets.push_back(n);
            window.prefetch_nodes.push_back(p);
            window.cache_sum += size;
          }
        } else {
          window.stopped = StopReason::kBudget;
          done = true;
          continue;
        }
      }
      for (NodeId child : graph.successors(n)) {
        if (seen.insert(child).second) queue.push_back(child);
      }
    }
    result.report.windows.push_back(std::move(window));
  }
  return result;
}

// Removes every Prefetch node and its edges; remaining ids are compacted in
// their original order.
inline Graph strip_prefetches(const Graph& g) {
  std::vector<NodeId> remap(g.size(), static_cast<NodeId>(-1));
  Graph out;
  for (NodeId i = 0; i < g.size(); ++i) {
    const Node& n = g.node(i);
    if (holds<Prefetch>(n.kind)) continue;
    remap[i] = out.add_node(n.kind, n.label, n.stream);
  }
  for (const Edge& e : g.edges()) {
    if (remap[e.producer] == static_cast<NodeId>(-1) ||
        remap[e.consumer] == static_cast<NodeId>(-1)) {
      continue;
    }
    out.add_edge(remap[e.producer], remap[e.consumer]);
  }
  return out;
}

struct CheckReport {
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
  std::string summary() const {
    std::string s;
    for (const auto& f : failures) s += f + "\n";
    return s;
  }
};

// Independent re-check of a pass output. When `original` is given the
// MAIN-stream graph must be unchanged.
inline CheckReport verify_pass(const Graph& out, const PassConfig& cfg,
                               const Graph* original = nullptr) {
  CheckReport report;
  auto fail = [&](std::string msg) { report.failures.push_back(std::move(msg)); };
  auto label = [&](NodeId id) { return out.node(id).label; };

  bool acyclic = true;
  try {
    topo_order(out);
  } catch (const GraphError& e) {
    acyclic = false;
    fail(e.what());
  }

  std::vector<NodeId> prefetches;
  for (NodeId i = 0; i < out.size(); ++i) {
    const Node& n = out.node(i);
    const bool is_prefetch = holds<Prefetch>(n.kind);
    if (is_prefetch != (n.stream == Stream::kPrefetch)) {
      fail("node '" + n.label + "' (" + kind_name(n.kind) + ") is on the " +
           stream_name(n.stream) + " stream");
    }
    if (is_prefetch) prefetches.push_back(i);
  }

  for (NodeId p : prefetches) {
    const auto& pf = std::get<Prefetch>(out.node(p).kind);
    if (pf.target >= out.size() || !is_prefetchable(out.node(pf.target).kind)) {
      fail("prefetch '" + label(p) + "' does not target a MatMul or SelfAttention");
      continue;
    }
    if (pf.bytes != mem_size(out.node(pf.target).kind)) {
      fail("prefetch '" + label(p) + "' moves " + std::to_string(pf.bytes) +
           " bytes but its target reads " +
           std::to_string(mem_size(out.node(pf.target).kind)));
    }
    const auto& succ = out.successors(p);
    if (succ.size() != 1 || succ.front() != pf.target) {
      fail("prefetch '" + label(p) + "' must have exactly one outgoing edge, to '" +
           label(pf.target) + "'");
    }
    for (NodeId pred : out.predecessors(p)) {
      if (pred == pf.target) {
        fail("edge " + label(pf.target) + " -> " + label(p) +
             " orders a prefetch after its target");
      }
    }
  }

  if (acyclic) {
    // Re-derive each window over the MAIN graph as the BFS prefix that stays
    // below the budget, then charge every prefetch to the first window (in
    // topological order) whose prefix holds its target.
    const Graph main = strip_prefetches(out);
    std::vector<NodeId> to_out;
    for (NodeId i = 0; i < out.size(); ++i) {
      if (!holds<Prefetch>(out.node(i).kind)) to_out.push_back(i);
    }
    std::map<NodeId, NodeId> prefetch_of;  // target (out id) -> prefetch
    for (NodeId p : prefetches) {
      const NodeId t = std::get<Prefetch>(out.node(p).kind).target;
      if (!prefetch_of.emplace(t, p).second) {
        fail("node '" + label(t) + "' is prefetched more than once");
      }
    }
    std::set<NodeId> charged;
    for (NodeId op : topo_order(main)) {
      if (!holds<AllReduce>(main.node(op).kind)) continue;
      Bytes sum = 0;
      Bytes visited_bytes = 0;
      std::deque<NodeId> queue(main.successors(op).begin(), main.successors(op).end());
      std::set<NodeId> seen(queue.begin(), queue.end());
      while (!queue.empty()) {
        const NodeId n = queue.front();
        queue.pop_front();
        if (holds<AllReduce>(main.node(n).kind)) break;
        if (is_prefetchable(main.node(n).kind)) {
          visited_bytes += mem_size(main.node(n).kind);
          if (visited_bytes >= cfg.l2_capacity) break;
        }
        auto it = prefetch_of.find(to_out[n]);
        if (it != prefetch_of.end() && charged.insert(it->first).second) {
          sum += std::get<Prefetch>(out.node(it->second).kind).bytes;
          std::set<NodeId> anchors(main.predecessors(op).begin(),
                                   main.predecessors(op).end());
          std::set<NodeId> actual;
          for (NodeId pred : out.predecessors(it->second)) actual.insert(pred);
          std::set<NodeId> expected;
          for (NodeId a : anchors) expected.insert(to_out[a]);
          if (actual != expected) {
            fail("prefetch '" + label(it->second) +
                 "' is not anchored on the producers of '" + main.node(op).label + "'");
          }
        }
        for (NodeId child : main.successors(n)) {
          if (seen.insert(child).second) queue.push_back(child);
        }
      }
      if (sum > 0 && sum >= cfg.l2_capacity) {
        fail("window of '" + main.node(op).label + "' prefetches " +
             std::to_string(sum) + " bytes, not below L2 capacity " +
             std::to_string(cfg.l2_capacity));
      }
    }
    for (const auto& [target, p] : prefetch_of) {
      if (!charged.count(target)) {
        fail("prefetch '" + label(p) + "' targets '" + label(target) +
             "' outside every allreduce window or beyond its L2 budget");
      }
    }
  }

  if (original != nullptr) {
    const Graph main = strip_prefetches(out);
    if (!(main == *original)) {
      fail("MAIN-stream nodes or edges differ from the input graph");
    }
  }
  return report;
}

inline nlohmann::json pass_report_to_json(const PassReport& r, const Graph& g) {
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : r.windows) {
    nlohmann::json targets = nlohmann::json::array();
    for (NodeId t : w.targets) targets.push_back(g.node(t).label);
    windows.push_back({{"allreduce", g.node(w.allreduce).label},
                       {"allreduce_id", w.allreduce},
                       {"prefetched", targets},
                       {"prefetched_ids", w.targets},
                       {"cache_sum", w.cache_sum},
                       {"stopped_reason", stop_reason_name(w.stopped)}});
  }
  return {{"windows", windows}};
}

}  // namespace tpsim
