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

// Transformer architecture catalog, tensor-parallel sharding and per-device
// memory footprints.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tpsim/common.hpp"

namespace tpsim {

struct ModelConfig {
  std::string name;
  Count hidden_size = 0;
  Count num_layers = 0;
  Count num_q_heads = 0;
  Count num_kv_heads = 0;
  Count head_dim = 0;
  Count intermediate_size = 0;
  Count num_experts = 1;
  Count experts_per_token = 1;
  Count vocab_size = 0;
  Bytes weight_bytes_per_param = 1;
  Bytes activation_bytes_per_elem = 1;

  bool is_moe() const { return num_experts > 1; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Throws ConfigError naming the first violated field.
inline void validate(const ModelConfig& c) {
  const std::pair<const char*, Count> positive[] = {
      {"hidden_size", c.hidden_size},
      {"num_layers", c.num_layers},
      {"num_q_heads", c.num_q_heads},
      {"num_kv_heads", c.num_kv_heads},
      {"head_dim", c.head_dim},
      {"intermediate_size", c.intermediate_size},
      {"num_experts", c.num_experts},
      {"experts_per_token", c.experts_per_token},
      {"vocab_size", c.vocab_size},
      {"weight_bytes_per_param", c.weight_bytes_per_param},
      {"activation_bytes_per_elem", c.activation_bytes_per_elem},
  };
  for (const auto& [field, value] : positive) {
    if (value <= 0) {
      throw ConfigError(field, "must be > 0, got " + std::to_string(value));
    }
  }
  if (c.num_q_heads % c.num_kv_heads != 0) {
    throw ConfigError("num_q_heads",
                      "must be divisible by num_kv_heads (" +
                          std::to_string(c.num_q_heads) + " % " +
                          std::to_string(c.num_kv_heads) + " != 0)");
  }
  if (c.hidden_size != c.num_q_heads * c.head_dim) {
    throw ConfigError("hidden_size",
                      "must equal num_q_heads * head_dim (" +
                          std::to_string(c.num_q_heads) + " * " +
                          std::to_string(c.head_dim) + " != " +
                          std::to_string(c.hidden_size) + ")");
  }
  if (c.experts_per_token > c.num_experts) {
    throw ConfigError("experts_per_token", "must not exceed num_experts");
  }
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"name", c.name},
                     {"hidden_size", c.hidden_size},
                     {"num_layers", c.num_layers},
                     {"num_q_heads", c.num_q_heads},
                     {"num_kv_heads", c.num_kv_heads},
                     {"head_dim", c.head_dim},
                     {"intermediate_size", c.intermediate_size},
                     {"num_experts", c.num_experts},
                     {"experts_per_token", c.experts_per_token},
                     {"vocab_size", c.vocab_size},
                     {"weight_bytes_per_param", c.weight_bytes_per_param},
                     {"activation_bytes_per_elem", c.activation_bytes_per_elem}};
}

namespace detail {

inline Count read_count(const nlohmann::json& j, const char* field,
                        std::optional<Count> fallback = std::nullopt) {
  auto it = j.find(field);
  if (it == j.end()) {
    if (fallback) return *fallback;
    throw ConfigError(field, "missing required field");
  }
  if (!it->is_number_integer()) {
    throw ConfigError(field, "expected an integer, got " + it->dump());
  }
  return it->get<Count>();
}

}  // namespace detail

// Parses and validates. Unknown keys are ignored.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "expected a JSON object");
  ModelConfig c;
  auto name = j.find("name");
  if (name == j.end() || !name->is_string()) {
    throw ConfigError("name", "missing or not a string");
  }
  c.name = name->get<std::string>();
  c.hidden_size = detail::read_count(j, "hidden_size");
  c.num_layers = detail::read_count(j, "num_layers");
  c.num_q_heads = detail::read_count(j, "num_q_heads");
  c.num_kv_heads = detail::read_count(j, "num_kv_heads");
  c.head_dim = detail::read_count(j, "head_dim");
  c.intermediate_size = detail::read_count(j, "intermediate_size");
  c.num_experts = detail::read_count(j, "num_experts", 1);
  c.experts_per_token = detail::read_count(j, "experts_per_token", 1);
  c.vocab_size = detail::read_count(j, "vocab_size");
  c.weight_bytes_per_param = detail::read_count(j, "weight_bytes_per_param", 1);
  c.activation_bytes_per_elem =
      detail::read_count(j, "activation_bytes_per_elem", 1);
  validate(c);
  return c;
}

inline ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open model config");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, std::string("malformed JSON: ") + e.what());
  }
  return model_config_from_json(j);
}

// Published architecture dimensions, int8 weights and activations.
inline std::vector<ModelConfig> builtin_catalog() {
  auto dense = [](std::string name, Count hidden, Count layers, Count q,
                  Count kv, Count inter, Count vocab) {
    ModelConfig c;
    c.name = std::move(name);
    c.hidden_size = hidden;
    c.num_layers = layers;
    c.num_q_heads = q;
    c.num_kv_heads = kv;
    c.head_dim = hidden / q;
    c.intermediate_size = inter;
    c.vocab_size = vocab;
    return c;
  };
  auto moe = [&](std::string name, Count hidden, Count layers, Count q,
                 Count kv, Count inter, Count vocab, Count experts,
                 Count active) {
    ModelConfig c = dense(std::move(name), hidden, layers, q, kv, inter, vocab);
    c.num_experts = experts;
    c.experts_per_token = active;
    return c;
  };
  std::vector<ModelConfig> models = {
      dense("Llama3-8B", 4096, 32, 32, 8, 14336, 128256),
      dense("Llama3-70B", 8192, 80, 64, 8, 28672, 128256),
      dense("Llama3-405B", 16384, 126, 128, 8, 53248, 128256),
      dense("Qwen2-7B", 3584, 28, 28, 4, 18944, 152064),
      dense("Qwen2-72B", 8192, 80, 64, 8, 29568, 152064),
      dense("Qwen1.5-110B", 8192, 80, 64, 8, 49152, 152064),
      dense("Phi3-small", 4096, 32, 32, 8, 14336, 100352),
      dense("Phi3-medium", 5120, 40, 40, 10, 17920, 32064),
      moe("Phi3.5-MoE", 4096, 32, 32, 8, 6400, 32064, 16, 2),
      dense("Mistral-7B", 4096, 32, 32, 8, 14336, 32000),
      moe("Mixtral-8x7B", 4096, 32, 32, 8, 14336, 32000, 8, 2),
      moe("Mixtral-8x22B", 6144, 56, 48, 8, 16384, 32768, 8, 2),
  };
  for (const auto& m : models) validate(m);
  return models;
}

// Case-insensitive lookup ("llama3-8b" finds "Llama3-8B").
inline std::optional<ModelConfig> find_model(std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
    return out;
  };
  const std::string key = lower(name);
  for (auto& m : builtin_catalog()) {
    if (lower(m.name) == key) return m;
  }
  return std::nullopt;
}

class ShardError : public Error {
 public:
  ShardError(std::string dimension, const std::string& what)
      : Error(dimension + ": " + what), dimension_(std::move(dimension)) {}
  const std::string& dimension() const { return dimension_; }

 private:
  std::string dimension_;
};

// kExact rejects indivisible head/intermediate dimensions. kPadded gives
// every device the ceil-divided share, i.e. the most loaded device of an
// uneven split, which is what bounds latency.
enum class ShardPolicy { kExact, kPadded };

struct ShardedModel {
  ModelConfig base;
  Count tp_degree = 1;
  Count local_q_heads = 0;
  Count local_kv_heads = 0;
  Count local_intermediate = 0;
  bool kv_replicated = false;
  bool evenly_divided = true;

  Count q_dim() const { return local_q_heads * base.head_dim; }
  Count kv_dim() const { return local_kv_heads * base.head_dim; }
};

inline ShardedModel shard(const ModelConfig& config, Count tp_degree,
                          ShardPolicy policy = ShardPolicy::kExact) {
  if (tp_degree < 1) {
    throw ShardError("tp_degree", "must be >= 1, got " + std::to_string(tp_degree));
  }
  const bool q_even = config.num_q_heads % tp_degree == 0;
  const bool inter_even = config.intermediate_size % tp_degree == 0;
  const bool kv_fits = tp_degree <= config.num_kv_heads;
  const bool kv_even = !kv_fits || config.num_kv_heads % tp_degree == 0;
  if (policy == ShardPolicy::kExact) {
    auto reject = [&](const char* dim, Count value) {
      throw ShardError(dim, std::to_string(value) + " is not divisible by tp=" +
                                std::to_string(tp_degree));
    };
    if (!q_even) reject("num_q_heads", config.num_q_heads);
    if (!kv_even) reject("num_kv_heads", config.num_kv_heads);
    if (!inter_even) reject("intermediate_size", config.intermediate_size);
  }
  ShardedModel s;
  s.base = config;
  s.tp_degree = tp_degree;
  s.local_q_heads = ceil_div(config.num_q_heads, tp_degree);
  s.local_intermediate = ceil_div(config.intermediate_size, tp_degree);
  if (kv_fits) {
    s.local_kv_heads = ceil_div(config.num_kv_heads, tp_degree);
  } else {
    s.local_kv_heads = 1;
    s.kv_replicated = true;
  }
  s.evenly_divided = q_even && inter_even && kv_even;
  return s;
}

struct Workload {
  Count batch = 0;
  Count max_seq_len = 0;
  Count prefill_len = 0;
  Count decode_len = 0;
};

// Prompt takes round(2/3) of the sequence, generation the remainder.
inline Workload make_workload(Count batch, Count max_seq_len) {
  if (batch < 0) throw ConfigError("batch", "must be >= 0");
  if (max_seq_len < 2) throw ConfigError("max_seq_len", "must be >= 2");
  Workload w;
  w.batch = batch;
  w.max_seq_len = max_seq_len;
  w.prefill_len = std::llround(2.0 * static_cast<double>(max_seq_len) / 3.0);
  w.decode_len = max_seq_len - w.prefill_len;
  return w;
}

struct FootprintReport {
  Bytes attn_weight_bytes = 0;
  Bytes kv_cache_bytes = 0;
  Bytes mlp_weight_bytes = 0;
  Bytes attn_total_bytes = 0;
  Bytes total_model_bytes_per_device = 0;
};

// Per-layer, per-device footprint. The MLP term counts only the active
// experts (what a decode step reads); total_model_bytes_per_device holds
// every expert of every layer plus the vocab-parallel embedding table and is
// what HBM capacity is checked against.
inline FootprintReport layer_footprint(const ShardedModel& s,
                                       const Workload& w) {
  const auto& c = s.base;
  const Bytes wb = c.weight_bytes_per_param;
  FootprintReport r;
  const Bytes wq_wo = 2 * c.hidden_size * s.q_dim();
  const Bytes wk_wv = 2 * c.hidden_size * s.kv_dim();
  r.attn_weight_bytes = (wq_wo + wk_wv) * wb;
  r.kv_cache_bytes = 2 * w.batch * w.max_seq_len * s.kv_dim() *
                     c.activation_bytes_per_elem;
  const Bytes one_expert = 3 * c.hidden_size * s.local_intermediate * wb;
  r.mlp_weight_bytes = one_expert * c.experts_per_token;
  r.attn_total_bytes = r.attn_weight_bytes + r.kv_cache_bytes;
  const Bytes embedding = ceil_div(c.hidden_size * c.vocab_size * wb, s.tp_degree);
  r.total_model_bytes_per_device =
      c.num_layers * (r.attn_weight_bytes + one_expert * c.num_experts) +
      embedding;
  return r;
}

}  // namespace tpsim
