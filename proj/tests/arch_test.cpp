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

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "tpsim/arch.hpp"

namespace tpsim {
namespace {

ModelConfig llama8b() { return *find_model("Llama3-8B"); }

TEST(CatalogTest, HasTwelveValidModels) {
  const auto models = builtin_catalog();
  ASSERT_EQ(models.size(), 12u);
  for (const auto& m : models) {
    EXPECT_NO_THROW(validate(m)) << m.name;
    EXPECT_EQ(m.head_dim, 128) << m.name;
    EXPECT_EQ(m.weight_bytes_per_param, 1) << m.name;
  }
}

TEST(CatalogTest, LookupIsCaseInsensitive) {
  ASSERT_TRUE(find_model("llama3-8b"));
  EXPECT_EQ(find_model("LLAMA3-8B")->hidden_size, 4096);
  EXPECT_FALSE(find_model("gpt-5"));
}

TEST(CatalogTest, PublishedShapes) {
  const auto l405 = *find_model("Llama3-405B");
  EXPECT_EQ(l405.hidden_size, 16384);
  EXPECT_EQ(l405.num_layers, 126);
  EXPECT_EQ(l405.num_q_heads, 128);
  EXPECT_EQ(l405.num_kv_heads, 8);
  EXPECT_EQ(l405.intermediate_size, 53248);
  const auto mixtral = *find_model("Mixtral-8x7B");
  EXPECT_TRUE(mixtral.is_moe());
  EXPECT_EQ(mixtral.num_experts, 8);
  EXPECT_EQ(mixtral.experts_per_token, 2);
  EXPECT_FALSE(llama8b().is_moe());
}

TEST(ValidateTest, RejectsNonPositiveField) {
  auto m = llama8b();
  m.num_layers = 0;
  try {
    validate(m);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "num_layers");
  }
}

TEST(ValidateTest, RejectsGqaMismatch) {
  auto m = llama8b();
  m.num_kv_heads = 7;
  try {
    validate(m);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "num_q_heads");
  }
}

TEST(ValidateTest, RejectsHiddenMismatchAndTooManyActiveExperts) {
  auto m = llama8b();
  m.head_dim = 64;
  EXPECT_THROW(validate(m), ConfigError);
  m = llama8b();
  m.experts_per_token = 2;
  try {
    validate(m);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "experts_per_token");
  }
}

TEST(JsonTest, RoundTrip) {
  for (const auto& m : builtin_catalog()) {
    EXPECT_EQ(model_config_from_json(nlohmann::json(m)), m) << m.name;
  }
}

TEST(JsonTest, DefaultsAndErrors) {
  nlohmann::json j = llama8b();
  j.erase("num_experts");
  j.erase("weight_bytes_per_param");
  const auto m = model_config_from_json(j);
  EXPECT_EQ(m.num_experts, 1);
  EXPECT_EQ(m.weight_bytes_per_param, 1);

  j.erase("vocab_size");
  try {
    model_config_from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "vocab_size");
  }
  nlohmann::json bad = llama8b();
  bad["hidden_size"] = "wide";
  EXPECT_THROW(model_config_from_json(bad), ConfigError);
}

TEST(JsonTest, LoadsShippedConfigsAndRejectsMalformedFiles) {
  const std::string dir = TPSIM_SOURCE_DIR "/configs/";
  EXPECT_EQ(load_model_config(dir + "llama3-8b.json"), llama8b());
  EXPECT_EQ(load_model_config(dir + "mixtral-8x7b.json"), *find_model("Mixtral-8x7B"));

  const auto path = std::filesystem::temp_directory_path() / "tpsim_bad_model.json";
  std::ofstream(path) << "{ \"name\": ";
  try {
    load_model_config(path.string());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), path.string());
  }
  std::filesystem::remove(path);
  EXPECT_THROW(load_model_config("/nonexistent/model.json"), ConfigError);
}

TEST(ShardTest, DividesHeadsAndIntermediate) {
  const auto s = shard(llama8b(), 4);
  EXPECT_EQ(s.local_q_heads, 8);
  EXPECT_EQ(s.local_kv_heads, 2);
  EXPECT_EQ(s.local_intermediate, 3584);
  EXPECT_FALSE(s.kv_replicated);
  EXPECT_TRUE(s.evenly_divided);
}

TEST(ShardTest, ReplicatesKvBeyondKvHeads) {
  const auto s = shard(llama8b(), 16);
  EXPECT_EQ(s.local_q_heads, 2);
  EXPECT_EQ(s.local_kv_heads, 1);
  EXPECT_TRUE(s.kv_replicated);
}

TEST(ShardTest, ExactPolicyRejectsIndivisibleDimensions) {
  try {
    shard(llama8b(), 3);
    FAIL();
  } catch (const ShardError& e) {
    EXPECT_EQ(e.dimension(), "num_q_heads");
  }
  const auto phi = *find_model("Phi3-medium");  // 40 query heads, 10 KV heads
  try {
    shard(phi, 4);
    FAIL();
  } catch (const ShardError& e) {
    EXPECT_EQ(e.dimension(), "num_kv_heads");
  }
  EXPECT_THROW(shard(llama8b(), 0), ShardError);
}

TEST(ShardTest, PaddedPolicyRoundsUp) {
  const auto phi = *find_model("Phi3-medium");
  const auto s = shard(phi, 16, ShardPolicy::kPadded);
  EXPECT_EQ(s.local_q_heads, 3);  // ceil(40 / 16)
  EXPECT_EQ(s.local_intermediate, 1120);
  EXPECT_FALSE(s.evenly_divided);
}

TEST(WorkloadTest, TwoThirdsPrompt) {
  const auto w = make_workload(16, 8192);
  EXPECT_EQ(w.prefill_len, 5461);
  EXPECT_EQ(w.decode_len, 2731);
  EXPECT_EQ(make_workload(1, 3).prefill_len, 2);
  EXPECT_THROW(make_workload(-1, 8), ConfigError);
  EXPECT_THROW(make_workload(1, 1), ConfigError);
}

// Hand-derived: q_dim = 8 * 128, kv_dim = 2 * 128.
TEST(FootprintTest, Llama8bTp4) {
  const auto f = layer_footprint(shard(llama8b(), 4), make_workload(8, 16384));
  EXPECT_EQ(f.attn_weight_bytes, 2 * 4096 * 1024 + 2 * 4096 * 256);
  EXPECT_EQ(f.attn_weight_bytes, 10485760);
  EXPECT_EQ(f.kv_cache_bytes, 67108864);
  EXPECT_EQ(f.mlp_weight_bytes, 44040192);
  EXPECT_EQ(f.attn_total_bytes, 10485760 + 67108864);
}

TEST(FootprintTest, MoeCountsActiveExpertsPerLayer) {
  const auto m = *find_model("Mixtral-8x7B");
  const auto f = layer_footprint(shard(m, 8), make_workload(8, 4096));
  EXPECT_EQ(f.mlp_weight_bytes, 2 * 3 * 4096 * 1792);
  const Bytes per_layer = f.attn_weight_bytes + 8 * 3 * 4096 * 1792;
  EXPECT_EQ(f.total_model_bytes_per_device, 32 * per_layer + 4096 * 32000 / 8);
}

TEST(FootprintTest, ScalesInverselyWithTp) {
  const auto w = make_workload(8, 16384);
  for (const auto& m : builtin_catalog()) {
    const auto one = layer_footprint(shard(m, 1), w);
    for (Count tp : {2, 4, 8}) {
      ShardedModel s;
      try {
        s = shard(m, tp);
      } catch (const ShardError&) {
        continue;
      }
      const auto f = layer_footprint(s, w);
      EXPECT_EQ(f.mlp_weight_bytes * tp, one.mlp_weight_bytes) << m.name << " tp" << tp;
      if (s.kv_replicated) continue;
      EXPECT_EQ(f.attn_weight_bytes * tp, one.attn_weight_bytes) << m.name << " tp" << tp;
      EXPECT_EQ(f.kv_cache_bytes * tp, one.kv_cache_bytes) << m.name << " tp" << tp;
    }
  }
}

TEST(FootprintTest, KvIsLinearInBatchAndSequence) {
  const auto s = shard(llama8b(), 2);
  const auto a = layer_footprint(s, make_workload(4, 4096));
  EXPECT_EQ(layer_footprint(s, make_workload(8, 4096)).kv_cache_bytes, 2 * a.kv_cache_bytes);
  EXPECT_EQ(layer_footprint(s, make_workload(4, 8192)).kv_cache_bytes, 2 * a.kv_cache_bytes);
}

}  // namespace
}  // namespace tpsim
