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

// Per-device computation-graph IR for one decoder layer.
//
// Nodes live on one of two streams. Every compute and communication op runs
// on MAIN; prefetch ops run on PREFETCH and are synchronized with MAIN
// through ordinary dependency edges (events).

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <queue>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tpsim/arch.hpp"
#include "tpsim/common.hpp"

namespace tpsim {

using NodeId = std::size_t;

struct MatMul {
  Bytes weight_bytes = 0;
  Count flops = 0;
  Bytes activation_bytes = 0;
  friend bool operator==(const MatMul&, const MatMul&) = default;
};

struct SelfAttention {
  Bytes kv_bytes = 0;
  Count flops = 0;
  friend bool operator==(const SelfAttention&, const SelfAttention&) = default;
};

struct AllReduce {
  Bytes payload_bytes = 0;
  friend bool operator==(const AllReduce&, const AllReduce&) = default;
};

// Norms, activations, rotary embedding.
struct Elementwise {
  Bytes bytes = 0;
  Count flops = 0;
  friend bool operator==(const Elementwise&, const Elementwise&) = default;
};

struct Prefetch {
  NodeId target = 0;
  Bytes bytes = 0;
  friend bool operator==(const Prefetch&, const Prefetch&) = default;
};

using NodeKind = std::variant<MatMul, SelfAttention, AllReduce, Elementwise, Prefetch>;

template <typename T>
bool holds(const NodeKind& k) {
  return std::holds_alternative<T>(k);
}

inline const char* kind_name(const NodeKind& k) {
  static constexpr const char* kNames[] = {"MatMul", "SelfAttention", "AllReduce",
                                           "Elementwise", "Prefetch"};
  return kNames[k.index()];
}

enum class Stream { kMain = 0, kPrefetch = 1 };
inline constexpr std::size_t kNumStreams = 2;

inline const char* stream_name(Stream s) {
  return s == Stream::kMain ? "main" : "prefetch";
}

struct Node {
  NodeKind kind;
  Stream stream = Stream::kMain;
  std::string label;
  friend bool operator==(const Node&, const Node&) = default;
};

struct Edge {
  NodeId producer = 0;
  NodeId consumer = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

class Graph {
 public:
  NodeId add_node(NodeKind kind, std::string label) {
    const Stream stream = holds<Prefetch>(kind) ? Stream::kPrefetch : Stream::kMain;
    return add_node(std::move(kind), std::move(label), stream);
  }

  NodeId add_node(NodeKind kind, std::string label, Stream stream) {
    nodes_.push_back(Node{std::move(kind), stream, std::move(label)});
    succ_.emplace_back();
    pred_.emplace_back();
    return nodes_.size() - 1;
  }

  void add_edge(NodeId producer, NodeId consumer) {
    if (producer >= nodes_.size() || consumer >= nodes_.size()) {
      throw GraphError("edge " + std::to_string(producer) + " -> " +
                       std::to_string(consumer) + " references a missing node");
    }
    edges_.push_back(Edge{producer, consumer});
    succ_[producer].push_back(consumer);
    pred_[consumer].push_back(producer);
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }

  // Both in edge-insertion order.
  const std::vector<NodeId>& successors(NodeId id) const { return succ_.at(id); }
  const std::vector<NodeId>& predecessors(NodeId id) const { return pred_.at(id); }

  std::vector<NodeId> find(const std::function<bool(const Node&)>& pred) const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < nodes_.size(); ++i) {
      if (pred(nodes_[i])) out.push_back(i);
    }
    return out;
  }

  std::optional<NodeId> find_label(std::string_view label) const {
    for (NodeId i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].label == label) return i;
    }
    return std::nullopt;
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<NodeId>> succ_;
  std::vector<std::vector<NodeId>> pred_;
};

namespace detail {

// Depth-first search for one cycle among `remaining` nodes; returns it as
// "a -> b -> a".
inline std::string describe_cycle(const Graph& g, const std::vector<bool>& remaining) {
  enum : char { kWhite, kGrey, kBlack };
  std::vector<char> color(g.size(), kWhite);
  std::vector<NodeId> stack;
  std::string found;
  std::function<bool(NodeId)> visit = [&](NodeId u) {
    color[u] = kGrey;
    stack.push_back(u);
    for (NodeId v : g.successors(u)) {
      if (!remaining[v]) continue;
      if (color[v] == kGrey) {
        auto it = std::find(stack.begin(), stack.end(), v);
        for (; it != stack.end(); ++it) found += g.node(*it).label + " -> ";
        found += g.node(v).label;
        return true;
      }
      if (color[v] == kWhite && visit(v)) return true;
    }
    stack.pop_back();
    color[u] = kBlack;
    return false;
  };
  for (NodeId i = 0; i < g.size(); ++i) {
    if (remaining[i] && color[i] == kWhite && visit(i)) break;
  }
  return found;
}

}  // namespace detail

// Kahn's algorithm with the smallest ready id first, so the order depends
// only on node ids and edges, never on insertion order of edges.
inline std::vector<NodeId> topo_order(const Graph& g) {
  std::vector<std::size_t> indegree(g.size(), 0);
  for (const Edge& e : g.edges()) ++indegree[e.consumer];
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (NodeId i = 0; i < g.size(); ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::vector<NodeId> order;
  order.reserve(g.size());
  while (!ready.empty()) {
    NodeId u = ready.top();
    ready.pop();
    order.push_back(u);
    for (NodeId v : g.successors(u)) {
      if (--indegree[v] == 0) ready.push(v);
    }
  }
  if (order.size() != g.size()) {
    std::vector<bool> remaining(g.size(), true);
    for (NodeId u : order) remaining[u] = false;
    throw GraphError("cycle detected: " + detail::describe_cycle(g, remaining));
  }
  return order;
}

inline bool is_acyclic(const Graph& g) {
  try {
    topo_order(g);
    return true;
  } catch (const GraphError&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Layer builders
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr Count kElementwiseFlopsPerElement = 10;

// `tokens` is 1 for a decode step and the prompt length for prefill;
// `context` is the number of cached positions attention reads.
inline Graph build_layer(const ShardedModel& s, Count batch, Count tokens,
                         Count context, Count attention_flops) {
  const auto& c = s.base;
  const Bytes wb = c.weight_bytes_per_param;
  const Bytes ab = c.activation_bytes_per_elem;
  const Count rows = batch * tokens;
  const Count experts = c.experts_per_token;

  auto matmul = [&](Count in, Count out, Count copies = 1) {
    return MatMul{in * out * wb * copies, 2 * rows * in * out * copies,
                  rows * (in + out) * ab * copies};
  };

  Graph g;
  const Bytes residual = rows * c.hidden_size * ab;
  const NodeId ar_attn = g.add_node(AllReduce{residual}, "allreduce.attn");
  const NodeId wq = g.add_node(matmul(c.hidden_size, s.q_dim()), "attn.wq");
  const NodeId wk = g.add_node(matmul(c.hidden_size, s.kv_dim()), "attn.wk");
  const NodeId wv = g.add_node(matmul(c.hidden_size, s.kv_dim()), "attn.wv");
  const Count rot_elems = rows * (s.q_dim() + s.kv_dim());
  const NodeId rotary = g.add_node(
      Elementwise{2 * rot_elems * ab, kElementwiseFlopsPerElement * rot_elems},
      "attn.rotary");
  const NodeId kernel = g.add_node(
      SelfAttention{2 * batch * context * s.kv_dim() * ab, attention_flops},
      "attn.kernel");
  const NodeId wo = g.add_node(matmul(s.q_dim(), c.hidden_size), "attn.wo");
  const NodeId ar_mlp = g.add_node(AllReduce{residual}, "allreduce.mlp");
  const NodeId gate =
      g.add_node(matmul(c.hidden_size, s.local_intermediate, experts), "mlp.gate");
  const NodeId up =
      g.add_node(matmul(c.hidden_size, s.local_intermediate, experts), "mlp.up");
  const Count act_elems = rows * s.local_intermediate * experts;
  const NodeId act = g.add_node(
      Elementwise{3 * act_elems * ab, kElementwiseFlopsPerElement * act_elems},
      "mlp.act");
  const NodeId down =
      g.add_node(matmul(s.local_intermediate, c.hidden_size, experts), "mlp.down");

  g.add_edge(ar_attn, wq);
  g.add_edge(ar_attn, wk);
  g.add_edge(ar_attn, wv);
  g.add_edge(wq, rotary);
  g.add_edge(wk, rotary);
  g.add_edge(rotary, kernel);
  g.add_edge(wv, kernel);
  g.add_edge(kernel, wo);
  g.add_edge(wo, ar_mlp);
  g.add_edge(ar_mlp, gate);
  g.add_edge(ar_mlp, up);
  g.add_edge(gate, act);
  g.add_edge(up, act);
  g.add_edge(act, down);
  return g;
}

}  // namespace detail

// One decode step of one decoder layer. The leading allreduce reduces the
// previous layer's MLP output and gates the attention block
// ("allreduce.attn"); the second gates the MLP block ("allreduce.mlp").
inline Graph build_decode_layer(const ShardedModel& s, Count batch, Count kv_len) {
  if (kv_len < 1) throw ContractError("build_decode_layer: kv_len must be >= 1");
  if (batch < 0) throw ContractError("build_decode_layer: batch must be >= 0");
  const Count flops = 2 * 2 * batch * s.local_q_heads * kv_len * s.base.head_dim;
  return detail::build_layer(s, batch, 1, kv_len, flops);
}

// Whole-prompt forward pass of one decoder layer; same topology as decode.
inline Graph build_prefill_layer(const ShardedModel& s, Count batch, Count prompt_len) {
  if (prompt_len < 1) {
    throw ContractError("build_prefill_layer: prompt_len must be >= 1");
  }
  if (batch < 0) throw ContractError("build_prefill_layer: batch must be >= 0");
  const Count flops =
      2 * 2 * batch * s.local_q_heads * prompt_len * prompt_len * s.base.head_dim;
  return detail::build_layer(s, batch, prompt_len, prompt_len, flops);
}

// ---------------------------------------------------------------------------
// JSON dump
// ---------------------------------------------------------------------------

inline nlohmann::json graph_to_json(const Graph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (NodeId i = 0; i < g.size(); ++i) {
    const Node& n = g.node(i);
    nlohmann::json j{{"id", i},
                     {"label", n.label},
                     {"stream", stream_name(n.stream)},
                     {"kind", kind_name(n.kind)}};
    std::visit(
        [&](const auto& k) {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, MatMul>) {
            j["weight_bytes"] = k.weight_bytes;
            j["flops"] = k.flops;
            j["activation_bytes"] = k.activation_bytes;
          } else if constexpr (std::is_same_v<T, SelfAttention>) {
            j["kv_bytes"] = k.kv_bytes;
            j["flops"] = k.flops;
          } else if constexpr (std::is_same_v<T, AllReduce>) {
            j["payload_bytes"] = k.payload_bytes;
          } else if constexpr (std::is_same_v<T, Elementwise>) {
            j["bytes"] = k.bytes;
            j["flops"] = k.flops;
          } else {
            j["target"] = k.target;
            j["bytes"] = k.bytes;
          }
        },
        n.kind);
    nodes.push_back(std::move(j));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : g.edges()) edges.push_back({e.producer, e.consumer});
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

inline Graph graph_from_json(const nlohmann::json& j) {
  Graph g;
  try {
    const auto& nodes = j.at("nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& n = nodes[i];
      if (n.at("id").get<NodeId>() != i) {
        throw GraphError("node ids must be dense and ordered, at index " +
                         std::to_string(i));
      }
      const std::string kind = n.at("kind").get<std::string>();
      NodeKind k;
      if (kind == "MatMul") {
        k = MatMul{n.at("weight_bytes").get<Bytes>(), n.at("flops").get<Count>(),
                   n.at("activation_bytes").get<Bytes>()};
      } else if (kind == "SelfAttention") {
        k = SelfAttention{n.at("kv_bytes").get<Bytes>(), n.at("flops").get<Count>()};
      } else if (kind == "AllReduce") {
        k = AllReduce{n.at("payload_bytes").get<Bytes>()};
      } else if (kind == "Elementwise") {
        k = Elementwise{n.at("bytes").get<Bytes>(), n.at("flops").get<Count>()};
      } else if (kind == "Prefetch") {
        k = Prefetch{n.at("target").get<NodeId>(), n.at("bytes").get<Bytes>()};
      } else {
        throw GraphError("unknown node kind '" + kind + "'");
      }
      const std::string stream = n.at("stream").get<std::string>();
      if (stream != "main" && stream != "prefetch") {
        throw GraphError("unknown stream '" + stream + "'");
      }
      g.add_node(std::move(k), n.at("label").get<std::string>(),
                 stream == "main" ? Stream::kMain : Stream::kPrefetch);
    }
    for (const auto& e : j.at("edges")) {
      g.add_edge(e.at(0).get<NodeId>(), e.at(1).get<NodeId>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw GraphError(std::string("malformed graph JSON: ") + e.what());
  }
  return g;
}

}  // namespace tpsim
