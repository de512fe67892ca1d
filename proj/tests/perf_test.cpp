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

#include <cmath>

#include <gtest/gtest.h>

#include "tpsim/perf.hpp"

namespace tpsim {
namespace {

HardwareSpec spec_with_l2(Bytes mib) {
  auto s = default_spec();
  s.l2_capacity = mib * kMiB;
  return s;
}

TEST(OpLatencyTest, MemoryBoundMatMul) {
  const MatMul gate{14680064, 117440512, 0};
  const auto s = default_spec();
  // Hand roofline: 117440512 / 800e12 = 0.147 us; 1.1 * 14680064 / 1.84e12 = 8.776 us.
  EXPECT_NEAR(op_latency(gate, s, false), 8.776125e-6, 1e-11);
  // At L2 bandwidth: 1.1 * 14680064 / 12e12 = 1.3457 us.
  EXPECT_NEAR(op_latency(gate, s, true), 1.345673e-6, 1e-11);
}

TEST(OpLatencyTest, ComputeBoundAndDegenerate) {
  const auto s = default_spec();
  EXPECT_DOUBLE_EQ(op_latency(MatMul{1, 800'000'000'000'000, 0}, s, false), 1.0);
  EXPECT_EQ(op_latency(MatMul{0, 0, 0}, s, false), 0.0);
  EXPECT_DOUBLE_EQ(op_latency(Elementwise{1'840'000, 0}, s, true), 1e-6);
  EXPECT_DOUBLE_EQ(op_latency(Prefetch{0, 1'840'000}, s, false), 1e-6);
  EXPECT_THROW(op_latency(AllReduce{1}, s, false), ContractError);
}

TEST(OpLatencyTest, ActivationOverheadOption) {
  PerfOptions none;
  none.activation_overhead = 0;
  EXPECT_DOUBLE_EQ(op_latency(SelfAttention{1'840'000, 0}, default_spec(), false, none), 1e-6);
}

TEST(AllreduceLatencyTest, RingModel) {
  const auto s = default_spec();
  EXPECT_DOUBLE_EQ(allreduce_latency(0, s, {4}), 25e-6);
  EXPECT_EQ(allreduce_latency(1 << 20, s, {1}), 0.0);
  EXPECT_NEAR(allreduce_latency(16384, s, {4}), 25.98304e-6, 1e-15);
  PerfOptions one;
  one.ring_factor = 1.0;
  EXPECT_NEAR(allreduce_latency(16384, s, {4}, one), 25e-6 + 16384 / 25e9, 1e-15);
  EXPECT_DOUBLE_EQ(ring_factor({2}, {}), 1.0);
}

TEST(SimulateTest, SerialWithoutPrefetch) {
  const auto spec = spec_with_l2(104);
  const ClusterSpec cluster{4};
  const Graph g = build_decode_layer(shard(*find_model("Llama3-8B"), 4), 4, 8192);
  const Timeline tl = simulate_layer(g, spec, cluster);
  double sum = 0;
  for (const Node& n : g.nodes()) sum += node_latency(n.kind, spec, cluster, false, {});
  EXPECT_NEAR(tl.total, sum, 1e-15);
  EXPECT_EQ(tl.peak_residency, 0);
  ASSERT_EQ(tl.windows.size(), 2u);
  EXPECT_EQ(tl.windows[0].label, "allreduce.attn");
  EXPECT_NEAR(tl.windows[0].allreduce_time + tl.windows[0].compute_time +
                  tl.windows[1].allreduce_time + tl.windows[1].compute_time,
              sum, 1e-15);
}

// ar (25 us) -> m, with m's prefetch running alongside the allreduce.
Graph one_window(Bytes weight) {
  Graph g;
  const NodeId ar = g.add_node(AllReduce{0}, "ar");
  const NodeId m = g.add_node(MatMul{weight, 0, 0}, "m");
  g.add_edge(ar, m);
  return insert_prefetch_ops(g, {104 * kMiB, true}).graph;
}

TEST(SimulateTest, PrefetchHiddenBehindAllreduce) {
  const auto spec = spec_with_l2(104);
  const Bytes weight = 18'400'000;  // 10 us over HBM
  const Timeline tl = simulate_layer(one_window(weight), spec, {4});
  EXPECT_NEAR(tl.intervals[2].end, 10e-6, 1e-15);
  EXPECT_NEAR(tl.intervals[1].start, 25e-6, 1e-15);
  EXPECT_TRUE(tl.intervals[1].resident);
  EXPECT_NEAR(tl.total, 25e-6 + 1.1 * weight / 12e12, 1e-15);
  EXPECT_EQ(tl.peak_residency, weight);
}

TEST(SimulateTest, ConsumerWaitsForLongPrefetch) {
  const auto spec = spec_with_l2(104);
  const Timeline tl = simulate_layer(one_window(73'600'000), spec, {4});  // 40 us
  EXPECT_NEAR(tl.intervals[1].start, 40e-6, 1e-15);
  EXPECT_TRUE(tl.intervals[1].resident);
  ASSERT_EQ(tl.windows.size(), 1u);
  EXPECT_NEAR(tl.windows[0].prefetch_time, 40e-6, 1e-15);
}

TEST(SimulateTest, ResidencyAboveCapacityThrows) {
  Graph g;
  const NodeId m = g.add_node(MatMul{2 * kMiB, 0, 0}, "m");
  const NodeId p = g.add_node(Prefetch{m, 2 * kMiB}, "p");
  g.add_edge(p, m);
  EXPECT_THROW(simulate_layer(g, spec_with_l2(1), {1}), SimulationError);
  EXPECT_NO_THROW(simulate_layer(g, spec_with_l2(2), {1}));
}

TEST(SimulateTest, EvictionFreesSpaceForLaterWindows) {
  // Two 3 MiB operands in sequence fit a 4 MiB L2 only if the first is evicted.
  Graph g;
  const NodeId a1 = g.add_node(AllReduce{0}, "a1");
  const NodeId m1 = g.add_node(MatMul{3 * kMiB, 0, 0}, "m1");
  const NodeId a2 = g.add_node(AllReduce{0}, "a2");
  const NodeId m2 = g.add_node(MatMul{3 * kMiB, 0, 0}, "m2");
  g.add_edge(a1, m1);
  g.add_edge(m1, a2);
  g.add_edge(a2, m2);
  const auto r = insert_prefetch_ops(g, {4 * kMiB, true});
  ASSERT_EQ(r.graph.size(), 6u);
  const Timeline tl = simulate_layer(r.graph, spec_with_l2(4), {8});
  EXPECT_EQ(tl.peak_residency, 3 * kMiB);
}

// Dependencies, residency and per-window overlap bounds on every catalog layer.
TEST(SimulateTest, TimelineInvariants) {
  for (Bytes mib : {0, 32, 104, 192}) {
    const auto spec = spec_with_l2(mib);
    for (const auto& m : builtin_catalog()) {
      const auto s = shard(m, 8, ShardPolicy::kPadded);
      for (const Graph& layer : {build_decode_layer(s, 16, 6000), build_prefill_layer(s, 4, 512)}) {
        const auto pass = insert_prefetch_ops(layer, {spec.l2_capacity, true});
        const Graph& g = pass.graph;
        const Timeline tl = simulate_layer(g, spec, {8});
        for (const Edge& e : g.edges()) {
          EXPECT_LE(tl.intervals[e.producer].end, tl.intervals[e.consumer].start) << m.name;
        }
        EXPECT_LE(tl.peak_residency, spec.l2_capacity);
        const auto order = topo_order(g);
        for (const auto& w : pass.report.windows) {
          // The window runs from its allreduce to the last MAIN op before the next one.
          double end = tl.intervals[w.allreduce].end;
          double resident_compute = 0;
          bool inside = false;
          for (NodeId id : order) {
            const Node& n = g.node(id);
            if (n.stream != Stream::kMain) continue;
            if (id == w.allreduce) {
              inside = true;
              continue;
            }
            if (!inside) continue;
            if (holds<AllReduce>(n.kind)) break;
            end = tl.intervals[id].end;
            resident_compute += op_latency(n.kind, spec, is_prefetchable(n.kind), {});
          }
          const double duration = end - tl.intervals[w.allreduce].start;
          EXPECT_GE(duration + 1e-15, tl.intervals[w.allreduce].duration());
          EXPECT_GE(duration + 1e-15, tl.intervals[w.allreduce].duration() + resident_compute);
          for (NodeId p : w.prefetch_nodes) EXPECT_LE(tl.intervals[p].end, end);
        }
      }
    }
  }
}

TEST(EndToEndTest, SingleDecodeStepIsExact) {
  const auto m = *find_model("Llama3-8B");
  const auto spec = spec_with_l2(104);
  const ClusterSpec cluster{4};
  const auto w = make_workload(2, 3);
  ASSERT_EQ(w.decode_len, 1);
  const auto s = shard(m, 4);
  const auto r = end_to_end_latency(m, cluster, spec, w, true);
  const double prefill = evaluate_layer(build_prefill_layer(s, 2, 2), spec, cluster, true, {}).latency;
  const double decode = evaluate_layer(build_decode_layer(s, 2, 3), spec, cluster, true, {}).latency;
  EXPECT_DOUBLE_EQ(r.prefill, 32 * prefill);
  EXPECT_DOUBLE_EQ(r.decode, 32 * decode);
  EXPECT_DOUBLE_EQ(r.total, r.prefill + r.decode);
}

double exact_decode(const ModelConfig& m, const ClusterSpec& c, const HardwareSpec& spec,
                    const Workload& w, bool prefetch) {
  const auto s = shard(m, c.num_devices);
  double sum = 0;
  for (Count step = 1; step <= w.decode_len; ++step) {
    sum += evaluate_layer(build_decode_layer(s, w.batch, w.prefill_len + step), spec, c,
                          prefetch, {})
               .latency;
  }
  return static_cast<double>(m.num_layers) * sum;
}

TEST(EndToEndTest, ShortGenerationsSumEveryStep) {
  const auto m = *find_model("Qwen2-7B");
  const auto spec = spec_with_l2(64);
  const auto w = make_workload(8, 40);
  ASSERT_LE(w.decode_len, kDecodeSamplePoints);
  const auto r = end_to_end_latency(m, {4}, spec, w, true);
  EXPECT_NEAR(r.decode, exact_decode(m, {4}, spec, w, true), 1e-12 * r.decode);
}

TEST(EndToEndTest, SampledDecodeTracksExactSum) {
  const auto m = *find_model("Llama3-8B");
  const auto spec = spec_with_l2(32);
  const auto w = make_workload(16, 1500);
  for (bool prefetch : {false, true}) {
    const auto r = end_to_end_latency(m, {8}, spec, w, prefetch);
    EXPECT_NEAR(r.decode, exact_decode(m, {8}, spec, w, prefetch), 1e-3 * r.decode);
  }
}

TEST(EndToEndTest, InfeasibleIsNotANumber) {
  const auto r = end_to_end_latency(*find_model("Llama3-405B"), {1}, spec_with_l2(104),
                                    make_workload(1, 2048), true);
  EXPECT_FALSE(r.feasible);
  EXPECT_TRUE(std::isnan(r.total));
  EXPECT_GT(r.capacity.required_bytes, r.capacity.hbm_capacity);
}

TEST(EndToEndTest, PrefetchHelpsAcrossModels) {
  const auto spec = spec_with_l2(104);
  const auto w = make_workload(16, 2048);
  for (const auto& m : builtin_catalog()) {
    const auto base = end_to_end_latency(m, {32}, spec, w, false, {}, ShardPolicy::kPadded);
    const auto pre = end_to_end_latency(m, {32}, spec, w, true, {}, ShardPolicy::kPadded);
    ASSERT_TRUE(base.feasible) << m.name;
    EXPECT_GE(base.total / pre.total, 1.0) << m.name;
  }
}

TEST(EndToEndTest, FfnPrefetchMatchesAllreduceAt32Devices) {
  const auto r = end_to_end_latency(*find_model("Llama3-405B"), {32}, spec_with_l2(104),
                                    make_workload(16, 8192), true);
  ASSERT_TRUE(r.feasible);
  EXPECT_NEAR(r.ffn.prefetch_us, r.ffn.allreduce_us, 0.25 * r.ffn.allreduce_us);
}

TEST(EndToEndTest, EqualBandwidthsLeaveOnlyOverlap) {
  auto spec = spec_with_l2(104);
  spec.l2_bw = spec.hbm_bw;
  const auto m = *find_model("Llama3-70B");
  const auto w = make_workload(8, 2048);
  const auto base = end_to_end_latency(m, {8}, spec, w, false);
  const auto pre = end_to_end_latency(m, {8}, spec, w, true);
  EXPECT_LE(pre.total, base.total);
}

TEST(EndToEndTest, FasterHardwareNeverSlower) {
  const auto m = *find_model("Mixtral-8x7B");
  const auto w = make_workload(16, 4096);
  const auto base = spec_with_l2(104);
  const double ref = end_to_end_latency(m, {8}, base, w, true).total;
  for (int field = 0; field < 4; ++field) {
    auto faster = base;
    double* value[] = {&faster.hbm_bw, &faster.l2_bw, &faster.link_bw, &faster.peak_throughput};
    *value[field] *= 1.5;
    EXPECT_LE(end_to_end_latency(m, {8}, faster, w, true).total, ref) << field;
  }
}

}  // namespace
}  // namespace tpsim
