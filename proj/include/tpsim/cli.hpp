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

// Command-line surface. `run` is the whole program behind `main`, kept in
// the library so tests can drive every subcommand in-process.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tpsim/arch.hpp"
#include "tpsim/dse.hpp"
#include "tpsim/graph.hpp"
#include "tpsim/hw.hpp"
#include "tpsim/pass.hpp"
#include "tpsim/perf.hpp"
#include "tpsim/report.hpp"

namespace tpsim::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kUnknownModel = 3,
  kInfeasible = 4,
  kOutputError = 5,
  kConfigError = 6,
};

enum class Command {
  kCatalog,
  kFootprint,
  kPassExplain,
  kSimulate,
  kDseL2,
  kDseCluster,
  kDseBandwidth,
  kDseCompute,
};

struct RunConfig {
  Command command = Command::kCatalog;
  std::vector<std::string> models;  // catalog names or JSON paths
  std::optional<Count> tp;
  std::optional<Count> batch;
  std::optional<Count> seq;
  std::optional<double> l2_mb;
  std::optional<double> link_gbps;
  std::optional<double> tops;
  std::optional<double> l2_tbps;
  std::optional<double> hbm_tbps;
  std::optional<double> hbm_gb;
  std::optional<double> link_latency_us;
  std::optional<double> area_per_core;
  std::optional<double> area_per_mb_l2;
  std::optional<double> tops_per_core;
  std::optional<double> ring_factor;
  std::optional<double> activation_overhead;
  bool no_prefetch = false;
  bool explain = false;  // simulate: also write the pass report
  std::optional<std::string> out_dir;
  std::string format = "csv";
  std::optional<std::string> grid;     // "start:stop:step" or "a,b,c"
  std::optional<std::string> l2_grid;  // dse-compute L2 bandwidths, TB/s
  std::optional<std::string> spec_path;  // PRESERVE_SPEC
  unsigned threads = 0;
};

class CliError : public Error {
 public:
  CliError(ExitCode code, const std::string& what) : Error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

// "8:160:8" (inclusive) or "8,16,32".
inline std::vector<double> parse_grid(const std::string& text) {
  auto number = [&](const std::string& tok) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size()) {
      throw CliError(kUsage, "bad grid value '" + tok + "' in '" + text + "'");
    }
    return v;
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string tok; std::getline(ss, tok, ':');) parts.push_back(tok);
    if (parts.size() != 3) throw CliError(kUsage, "grid '" + text + "' must be start:stop:step");
    const double start = number(parts[0]), stop = number(parts[1]), step = number(parts[2]);
    if (!(step > 0) || stop < start) throw CliError(kUsage, "grid '" + text + "' is empty");
    const auto n = static_cast<long long>(std::floor((stop - start) / step + 1e-9));
    for (long long i = 0; i <= n; ++i) out.push_back(start + static_cast<double>(i) * step);
  } else {
    std::stringstream ss(text);
    for (std::string tok; std::getline(ss, tok, ',');) out.push_back(number(tok));
  }
  try {
    require_increasing(out, "grid");
  } catch (const SweepError& e) {
    throw CliError(kUsage, e.what());
  }
  return out;
}

inline std::vector<ModelConfig> resolve_models(const std::vector<std::string>& names,
                                               std::vector<ModelConfig> fallback) {
  if (names.empty()) return fallback;
  std::vector<ModelConfig> out;
  for (const auto& n : names) {
    if (auto m = find_model(n)) {
      out.push_back(*m);
    } else if (std::filesystem::is_regular_file(n)) {
      out.push_back(load_model_config(n));
    } else {
      std::string known;
      for (const auto& c : builtin_catalog()) known += (known.empty() ? "" : ", ") + c.name;
      throw CliError(kUnknownModel, "unknown model '" + n + "' (not a catalog name or a file); "
                                    "known models: " + known);
    }
  }
  return out;
}

inline HardwareSpec resolve_spec(const RunConfig& cfg, Bytes default_l2) {
  HardwareSpec s = cfg.spec_path ? load_hardware_spec(*cfg.spec_path) : default_spec();
  if (!cfg.spec_path || s.l2_capacity == 0) s.l2_capacity = default_l2;
  if (cfg.l2_mb) s.l2_capacity = static_cast<Bytes>(std::llround(*cfg.l2_mb * kMiB));
  if (cfg.link_gbps) s.link_bw = *cfg.link_gbps * kGbps;
  if (cfg.tops) s.peak_throughput = *cfg.tops * kTops;
  if (cfg.l2_tbps) s.l2_bw = *cfg.l2_tbps * kTBps;
  if (cfg.hbm_tbps) s.hbm_bw = *cfg.hbm_tbps * kTBps;
  if (cfg.hbm_gb) s.hbm_capacity = static_cast<Bytes>(std::llround(*cfg.hbm_gb * kGiB));
  if (cfg.link_latency_us) s.link_latency = *cfg.link_latency_us * 1e-6;
  if (cfg.area_per_core) s.area_per_core = *cfg.area_per_core;
  if (cfg.area_per_mb_l2) s.area_per_mb_l2 = *cfg.area_per_mb_l2;
  if (cfg.tops_per_core) s.throughput_per_core = *cfg.tops_per_core * kTops;
  validate(s);
  return s;
}

inline PerfOptions resolve_perf(const RunConfig& cfg) {
  PerfOptions p;
  p.ring_factor = cfg.ring_factor;
  if (cfg.activation_overhead) p.activation_overhead = *cfg.activation_overhead;
  if (p.activation_overhead < 0) throw CliError(kUsage, "--activation-overhead must be >= 0");
  if (p.ring_factor && *p.ring_factor < 0) throw CliError(kUsage, "--ring-factor must be >= 0");
  return p;
}

// Writes `name` into the output directory, or to `console` when no
// directory was given and `console` is set.
class Sink {
 public:
  Sink(const RunConfig& cfg, std::ostream& console) : cfg_(cfg), console_(console) {
    if (cfg.out_dir) {
      std::error_code ec;
      std::filesystem::create_directories(*cfg.out_dir, ec);
      if (!std::filesystem::is_directory(*cfg.out_dir)) {
        throw CliError(kOutputError, "cannot create output directory '" + *cfg.out_dir + "'");
      }
    }
  }

  void file(const std::string& name, const std::string& content, bool echo = false) {
    const std::filesystem::path dir = cfg_.out_dir ? *cfg_.out_dir : ".";
    const auto path = dir / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f || !(f << content) || !f.flush()) {
      throw CliError(kOutputError, "cannot write '" + path.string() + "'");
    }
    if (echo) console_ << content;
  }

  void stdout_or_file(const std::string& name, const std::string& content) {
    if (cfg_.out_dir) {
      file(name, content);
    } else {
      console_ << content;
    }
  }

  std::ostream& console() { return console_; }

 private:
  const RunConfig& cfg_;
  std::ostream& console_;
};

inline const std::vector<std::string>& sweep_csv_header() {
  static const std::vector<std::string> header = {
      "model", "batch", "seq_len", "tp", "l2_mb", "link_gbps", "tops", "l2_tbps",
      "latency_base_s", "latency_prefetch_s", "speedup", "tokens_per_s", "die_area_mm2",
      "density", "feasible"};
  return header;
}

inline std::string sweep_rows_csv(const SweepResult& r) {
  CsvWriter csv(sweep_csv_header());
  auto n = [](double v) { return format_number(v); };
  for (const auto& row : r.rows) {
    auto cell = [&](double v) { return row.feasible ? n(v) : std::string("N/A"); };
    csv.row({row.model, std::to_string(row.batch), std::to_string(row.seq_len),
             std::to_string(row.tp), n(row.l2_mb), n(row.link_gbps), n(row.tops),
             n(row.l2_tbps), cell(row.latency_base_s), cell(row.latency_prefetch_s),
             cell(row.speedup), cell(row.tokens_per_s), n(row.die_area_mm2),
             cell(row.density), row.feasible ? "true" : "false"});
  }
  return csv.str();
}

inline nlohmann::json sweep_rows_json(const SweepResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j{{"model", row.model},       {"batch", row.batch},
                     {"seq_len", row.seq_len},   {"tp", row.tp},
                     {"l2_mb", row.l2_mb},       {"link_gbps", row.link_gbps},
                     {"tops", row.tops},         {"l2_tbps", row.l2_tbps},
                     {"die_area_mm2", row.die_area_mm2},
                     {"feasible", row.feasible}, {"evenly_sharded", row.evenly_sharded}};
    if (row.feasible) {
      j["latency_base_s"] = row.latency_base_s;
      j["latency_prefetch_s"] = row.latency_prefetch_s;
      j["speedup"] = row.speedup;
      j["tokens_per_s"] = row.tokens_per_s;
      j["density"] = row.density;
      j["density_base"] = row.density_base;
      j["density_per_device"] = row.density_per_device;
      j["attn"] = {{"allreduce_us", row.attn.allreduce_us},
                   {"prefetch_us", row.attn.prefetch_us},
                   {"compute_us", row.attn.compute_us}};
      j["ffn"] = {{"allreduce_us", row.ffn.allreduce_us},
                  {"prefetch_us", row.ffn.prefetch_us},
                  {"compute_us", row.ffn.compute_us}};
    }
    rows.push_back(std::move(j));
  }
  return rows;
}

inline void emit_sweep_rows(Sink& sink, const RunConfig& cfg, const std::string& stem,
                            const SweepResult& r) {
  if (cfg.format == "json") {
    sink.file(stem + ".json", sweep_rows_json(r).dump(2) + "\n");
  } else {
    sink.file(stem + ".csv", sweep_rows_csv(r));
  }
  const bool any = std::any_of(r.rows.begin(), r.rows.end(),
                               [](const SweepRow& row) { return row.feasible; });
  if (!any) throw CliError(kInfeasible, "every point of the sweep is infeasible (HBM capacity "
                                        "or sharding); try more devices or smaller workloads");
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int cmd_catalog(const RunConfig& cfg, Sink& sink) {
  const auto models = resolve_models(cfg.models, builtin_catalog());
  if (cfg.format == "json") {
    sink.stdout_or_file("catalog.json", nlohmann::json(models).dump(2) + "\n");
    return kOk;
  }
  CsvWriter csv({"name", "hidden_size", "num_layers", "num_q_heads", "num_kv_heads", "head_dim",
                 "intermediate_size", "num_experts", "experts_per_token", "vocab_size",
                 "weight_bytes_per_param", "activation_bytes_per_elem"});
  for (const auto& m : models) {
    csv.row({m.name, std::to_string(m.hidden_size), std::to_string(m.num_layers),
             std::to_string(m.num_q_heads), std::to_string(m.num_kv_heads),
             std::to_string(m.head_dim), std::to_string(m.intermediate_size),
             std::to_string(m.num_experts), std::to_string(m.experts_per_token),
             std::to_string(m.vocab_size), std::to_string(m.weight_bytes_per_param),
             std::to_string(m.activation_bytes_per_elem)});
  }
  sink.stdout_or_file("catalog.csv", csv.str());
  return kOk;
}

// Per-layer footprint for every TP degree in 1..64 that divides the model.
inline int cmd_footprint(const RunConfig& cfg, Sink& sink) {
  const auto models = resolve_models(cfg.models, builtin_catalog());
  const Workload w = make_workload(cfg.batch.value_or(8), cfg.seq.value_or(16384));
  std::vector<Count> degrees;
  if (cfg.tp) {
    degrees.push_back(*cfg.tp);
  } else {
    for (Count tp = 1; tp <= 64; ++tp) degrees.push_back(tp);
  }
  CsvWriter csv({"model", "tp", "batch", "seq_len", "attn_weight_bytes", "kv_cache_bytes",
                 "mlp_weight_bytes", "attn_total_bytes", "total_model_bytes_per_device",
                 "attn_total_mib", "mlp_mib"});
  nlohmann::json rows = nlohmann::json::array();
  const double mib = static_cast<double>(kMiB);
  for (const auto& m : models) {
    for (Count tp : degrees) {
      ShardedModel s;
      try {
        s = shard(m, tp);
      } catch (const ShardError& e) {
        if (cfg.tp) throw CliError(kConfigError, m.name + ": " + e.what());
        continue;
      }
      const FootprintReport f = layer_footprint(s, w);
      csv.row({m.name, std::to_string(tp), std::to_string(w.batch),
               std::to_string(w.max_seq_len), std::to_string(f.attn_weight_bytes),
               std::to_string(f.kv_cache_bytes), std::to_string(f.mlp_weight_bytes),
               std::to_string(f.attn_total_bytes),
               std::to_string(f.total_model_bytes_per_device),
               format_number(static_cast<double>(f.attn_total_bytes) / mib),
               format_number(static_cast<double>(f.mlp_weight_bytes) / mib)});
      rows.push_back({{"model", m.name},
                      {"tp", tp},
                      {"attn_weight_bytes", f.attn_weight_bytes},
                      {"kv_cache_bytes", f.kv_cache_bytes},
                      {"mlp_weight_bytes", f.mlp_weight_bytes},
                      {"attn_total_bytes", f.attn_total_bytes},
                      {"total_model_bytes_per_device", f.total_model_bytes_per_device}});
    }
  }
  if (cfg.format == "json") {
    sink.stdout_or_file("footprint.json", rows.dump(2) + "\n");
  } else {
    sink.stdout_or_file("footprint.csv", csv.str());
  }
  return kOk;
}

inline ModelConfig single_model(const RunConfig& cfg) {
  const auto models = resolve_models(cfg.models, {*find_model("Llama3-8B")});
  if (models.size() != 1) throw CliError(kUsage, "this command takes exactly one --model");
  return models.front();
}

inline ShardedModel checked_shard(const ModelConfig& m, Count tp) {
  try {
    return shard(m, tp);
  } catch (const ShardError& e) {
    throw CliError(kConfigError, m.name + ": " + e.what());
  }
}

inline int cmd_pass_explain(const RunConfig& cfg, Sink& sink) {
  const ModelConfig m = single_model(cfg);
  const HardwareSpec spec = resolve_spec(cfg, 104 * kMiB);
  const ShardedModel s = checked_shard(m, cfg.tp.value_or(4));
  const Workload w = make_workload(cfg.batch.value_or(4), cfg.seq.value_or(16384));
  const Graph layer = build_decode_layer(s, w.batch, w.max_seq_len);
  const PassConfig pc{spec.l2_capacity, !cfg.no_prefetch};
  const PassResult r = insert_prefetch_ops(layer, pc);
  const CheckReport check = verify_pass(r.graph, pc, &layer);
  nlohmann::json j{{"model", m.name},
                   {"tp", s.tp_degree},
                   {"batch", w.batch},
                   {"kv_len", w.max_seq_len},
                   {"l2_capacity", spec.l2_capacity},
                   {"report", pass_report_to_json(r.report, r.graph)},
                   {"verified", check.ok()},
                   {"graph", graph_to_json(r.graph)}};
  sink.stdout_or_file("pass_report.json", j.dump(2) + "\n");
  if (!check.ok()) {
    std::cerr << check.summary();
    return kFailure;
  }
  return kOk;
}

// Chrome trace-event format: one complete event per node, one lane per stream.
inline nlohmann::json timeline_trace(const Graph& g, const Timeline& tl) {
  nlohmann::json events = nlohmann::json::array();
  for (NodeId i = 0; i < g.size(); ++i) {
    const auto& iv = tl.intervals[i];
    events.push_back({{"name", g.node(i).label},
                      {"cat", kind_name(g.node(i).kind)},
                      {"ph", "X"},
                      {"ts", iv.start * 1e6},
                      {"dur", iv.duration() * 1e6},
                      {"pid", 0},
                      {"tid", stream_name(iv.stream)},
                      {"args", {{"resident", iv.resident}}}});
  }
  return {{"traceEvents", events}, {"displayTimeUnit", "ns"}};
}

inline std::string decomposition_csv(const Timeline& tl) {
  CsvWriter csv({"window", "allreduce_us", "prefetch_us", "compute_us"});
  for (const auto& w : tl.windows) {
    csv.row({w.label, format_number(w.allreduce_time * 1e6), format_number(w.prefetch_time * 1e6),
             format_number(w.compute_time * 1e6)});
  }
  return csv.str();
}

inline int cmd_simulate(const RunConfig& cfg, Sink& sink) {
  const ModelConfig m = single_model(cfg);
  const HardwareSpec spec = resolve_spec(cfg, 104 * kMiB);
  const PerfOptions perf = resolve_perf(cfg);
  const Count tp = cfg.tp.value_or(4);
  const ShardedModel s = checked_shard(m, tp);
  const ClusterSpec cluster{tp};
  const Workload w = make_workload(cfg.batch.value_or(4), cfg.seq.value_or(16384));

  const Graph layer = build_decode_layer(s, w.batch, w.max_seq_len);
  const PassResult pass = insert_prefetch_ops(layer, {spec.l2_capacity, !cfg.no_prefetch});
  const Timeline tl = simulate_layer(pass.graph, spec, cluster, perf);
  sink.file("timeline.json", timeline_trace(pass.graph, tl).dump(2) + "\n");
  if (cfg.explain) {
    sink.file("pass_report.json", pass_report_to_json(pass.report, pass.graph).dump(2) + "\n");
  }
  sink.file("decomposition.csv", decomposition_csv(tl));

  const LatencyBreakdown base = end_to_end_latency(m, cluster, spec, w, false, perf);
  if (!base.feasible) {
    throw CliError(kInfeasible, m.name + " needs " + std::to_string(base.capacity.required_bytes) +
                                    " bytes per device, HBM holds " +
                                    std::to_string(base.capacity.hbm_capacity) + " (N/A)");
  }
  const LatencyBreakdown pre = end_to_end_latency(m, cluster, spec, w, !cfg.no_prefetch, perf);
  CsvWriter csv({"model", "tp", "batch", "seq_len", "l2_mb", "prefill_s", "decode_s",
                 "latency_base_s", "latency_prefetch_s", "speedup", "layer_step_us"});
  csv.row({m.name, std::to_string(tp), std::to_string(w.batch), std::to_string(w.max_seq_len),
           format_number(l2_megabytes(spec)), format_number(pre.prefill),
           format_number(pre.decode), format_number(base.total), format_number(pre.total),
           format_number(base.total / pre.total), format_number(tl.total * 1e6)});
  sink.file("simulate.csv", csv.str(), true);
  return kOk;
}

inline std::vector<Workload> selected_workloads(const RunConfig& cfg, std::vector<Workload> fallback) {
  if (!cfg.batch && !cfg.seq) return fallback;
  std::vector<Count> batches, seqs;
  for (const auto& w : fallback) {
    if (std::find(batches.begin(), batches.end(), w.batch) == batches.end()) batches.push_back(w.batch);
    if (std::find(seqs.begin(), seqs.end(), w.max_seq_len) == seqs.end()) seqs.push_back(w.max_seq_len);
  }
  if (cfg.batch) batches = {*cfg.batch};
  if (cfg.seq) seqs = {*cfg.seq};
  std::vector<Workload> out;
  for (Count b : batches) {
    for (Count s : seqs) out.push_back(make_workload(b, s));
  }
  return out;
}

inline SweepSpec sweep_spec(const RunConfig& cfg, std::vector<ModelConfig> default_models,
                            std::vector<Workload> default_workloads, Count default_tp) {
  SweepSpec s;
  s.models = resolve_models(cfg.models, std::move(default_models));
  s.workloads = selected_workloads(cfg, std::move(default_workloads));
  s.num_devices = cfg.tp.value_or(default_tp);
  s.perf = resolve_perf(cfg);
  s.threads = cfg.threads;
  return s;
}

inline int cmd_dse_l2(const RunConfig& cfg, Sink& sink) {
  const SweepSpec sweep = sweep_spec(cfg, builtin_catalog(), default_workload_grid(), 32);
  const HardwareSpec tmpl = resolve_spec(cfg, 0);
  const auto grid = parse_grid(cfg.grid.value_or("8:160:8"));
  const SweepResult r = sweep_l2(tmpl, sweep, grid);
  emit_sweep_rows(sink, cfg, "dse_l2", r);

  std::vector<std::string> header = {"l2_mb"};
  for (const auto& m : sweep.models) header.push_back(m.name);
  header.push_back("mean");
  CsvWriter fig4(header);
  std::vector<Series> series4;
  for (const auto& m : sweep.models) series4.push_back({m.name, grid, r.normalized_by_model.at(m.name)});
  Series mean4{"mean", grid, {}};
  for (std::size_t v = 0; v < grid.size(); ++v) {
    std::vector<std::string> cells = {format_number(grid[v])};
    for (const auto& m : sweep.models) cells.push_back(format_number(r.normalized_by_model.at(m.name)[v]));
    cells.push_back(format_number(r.aggregates[v].normalized_mean_latency));
    mean4.y.push_back(r.aggregates[v].normalized_mean_latency);
    fig4.row(cells);
  }
  series4.push_back(mean4);
  sink.file("fig4.csv", fig4.str());
  sink.file("fig4.svg", emit_svg(series4, {"Inference latency vs. L2 cache size",
                                           "L2 cache size (MB)", "Normalized latency"}));

  CsvWriter fig5({"l2_mb", "density_prefetch", "density_baseline", "mean_speedup"});
  Series with{"with prefetching", grid, {}}, without{"without prefetching", grid, {}};
  for (const auto& a : r.aggregates) {
    fig5.row({format_number(a.l2_mb), format_number(a.mean_density),
              format_number(a.mean_density_base), format_number(a.mean_speedup)});
    with.y.push_back(a.mean_density);
    without.y.push_back(a.mean_density_base);
  }
  sink.file("fig5.csv", fig5.str());
  sink.file("fig5.svg", emit_svg({with, without}, {"Throughput density vs. L2 cache size",
                                                   "L2 cache size (MB)",
                                                   "Throughput density (token/s/mm^2)"}));
  const OptimalL2 opt = optimal_l2(r);
  const nlohmann::json o{{"with_prefetch", {{"l2_mb", opt.with_prefetch.l2_mb},
                                            {"density", opt.with_prefetch.density}}},
                         {"without_prefetch", {{"l2_mb", opt.without_prefetch.l2_mb},
                                               {"density", opt.without_prefetch.density}}},
                         {"density_ratio", opt.density_ratio},
                         {"num_cores", num_cores(tmpl)}};
  sink.file("optimal_l2.json", o.dump(2) + "\n");
  sink.console() << "optimal L2 with prefetching: " << format_number(opt.with_prefetch.l2_mb)
                 << " MB (" << format_number(opt.with_prefetch.density)
                 << " token/s/mm^2); without: " << format_number(opt.without_prefetch.l2_mb)
                 << " MB (" << format_number(opt.without_prefetch.density)
                 << "); ratio " << format_number(opt.density_ratio) << "\n";
  return kOk;
}

inline int cmd_dse_cluster(const RunConfig& cfg, Sink& sink) {
  SweepSpec sweep = sweep_spec(cfg, {*find_model("Llama3-405B")}, {make_workload(16, 8192)}, 32);
  sweep.policy = ShardPolicy::kExact;
  if (sweep.models.size() != 1 || sweep.workloads.size() != 1) {
    throw CliError(kUsage, "dse-cluster takes one model and one workload");
  }
  const HardwareSpec spec = resolve_spec(cfg, 104 * kMiB);
  const auto grid = parse_grid(cfg.grid.value_or("8,16,32,64,128"));
  const SweepResult r = sweep_cluster(spec, sweep, grid);
  emit_sweep_rows(sink, cfg, "dse_cluster", r);

  CsvWriter fig6({"tp", "speedup", "attn_allreduce_us", "attn_prefetch_us", "ffn_allreduce_us",
                  "ffn_prefetch_us", "feasible"});
  std::vector<double> xs;
  Series speed{"speedup", {}, {}};
  for (const auto& row : r.rows) {
    fig6.row({std::to_string(row.tp), format_number(row.speedup),
              format_number(row.attn.allreduce_us), format_number(row.attn.prefetch_us),
              format_number(row.ffn.allreduce_us), format_number(row.ffn.prefetch_us),
              row.feasible ? "true" : "false"});
    if (!row.feasible) continue;
    speed.x.push_back(static_cast<double>(row.tp));
    speed.y.push_back(row.speedup);
  }
  sink.file("fig6.csv", fig6.str());
  auto lat = [&](const char* label, auto field) {
    Series s{label, {}, {}};
    for (const auto& row : r.rows) {
      if (!row.feasible) continue;
      s.x.push_back(static_cast<double>(row.tp));
      s.y.push_back(field(row));
    }
    return s;
  };
  if (!speed.x.empty()) {
    sink.file("fig6.svg", emit_svg({speed}, {"Speedup vs. number of devices (" + sweep.models[0].name + ")",
                                             "Number of devices", "Speedup"}));
    sink.file("fig6_latency.svg",
              emit_svg({lat("Attention allreduce", [](const SweepRow& x) { return x.attn.allreduce_us; }),
                        lat("Attention prefetch", [](const SweepRow& x) { return x.attn.prefetch_us; }),
                        lat("FFN allreduce", [](const SweepRow& x) { return x.ffn.allreduce_us; }),
                        lat("FFN prefetch", [](const SweepRow& x) { return x.ffn.prefetch_us; })},
                       {"Allreduce and prefetch latency per decode step", "Number of devices",
                        "Latency (us)"}));
  }
  return kOk;
}

// Per-model mean speedup over the sweep's workloads, one curve per model.
inline std::vector<Series> speedup_series(const SweepResult& r, const SweepSpec& sweep,
                                          const std::vector<double>& xs, std::size_t offset,
                                          std::size_t stride) {
  std::vector<Series> out;
  const std::size_t nw = sweep.workloads.size();
  const std::size_t block = sweep.models.size() * nw;
  for (std::size_t m = 0; m < sweep.models.size(); ++m) {
    Series s{sweep.models[m].name, xs, {}};
    for (std::size_t v = 0; v < xs.size(); ++v) {
      const std::size_t b = (offset + v * stride) * block;
      s.y.push_back(detail::aggregate(r.rows, b + m * nw, b + (m + 1) * nw).mean_speedup);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline int cmd_dse_bandwidth(const RunConfig& cfg, Sink& sink) {
  const SweepSpec sweep = sweep_spec(cfg, builtin_catalog(), {make_workload(16, 8192)}, 128);
  const HardwareSpec tmpl = resolve_spec(cfg, 104 * kMiB);
  const auto grid = parse_grid(cfg.grid.value_or("200:1000:200"));
  const SweepResult r = sweep_bandwidth(tmpl, sweep, grid);
  emit_sweep_rows(sink, cfg, "dse_bandwidth", r);

  auto series = speedup_series(r, sweep, grid, 0, 1);
  Series mean{"mean", grid, {}};
  std::vector<std::string> header = {"link_gbps"};
  for (const auto& s : series) header.push_back(s.label);
  header.push_back("mean");
  CsvWriter fig7(header);
  for (std::size_t v = 0; v < grid.size(); ++v) {
    std::vector<std::string> cells = {format_number(grid[v])};
    for (const auto& s : series) cells.push_back(format_number(s.y[v]));
    cells.push_back(format_number(r.aggregates[v].mean_speedup));
    mean.y.push_back(r.aggregates[v].mean_speedup);
    fig7.row(cells);
  }
  series.push_back(mean);
  sink.file("fig7.csv", fig7.str());
  sink.file("fig7.svg", emit_svg(series, {"Speedup vs. link bandwidth (" +
                                              std::to_string(sweep.num_devices) + " devices)",
                                          "Link bandwidth (Gbit/s)", "Speedup"}));
  return kOk;
}

inline int cmd_dse_compute(const RunConfig& cfg, Sink& sink) {
  const SweepSpec sweep = sweep_spec(cfg, builtin_catalog(), {make_workload(16, 8192)}, 32);
  const HardwareSpec tmpl = resolve_spec(cfg, 104 * kMiB);
  const auto tops = parse_grid(cfg.grid.value_or("100,200,400,800,1600"));
  const auto l2 = parse_grid(cfg.l2_grid.value_or("6,12,24"));
  const SweepResult r = sweep_compute_l2bw(tmpl, sweep, tops, l2);
  emit_sweep_rows(sink, cfg, "dse_compute", r);

  std::vector<std::string> header = {"tops"};
  std::vector<Series> series;
  for (double bw : l2) {
    header.push_back("speedup_l2_" + format_number(bw) + "tbps");
    series.push_back({"L2 " + format_number(bw) + " TB/s", tops, {}});
  }
  CsvWriter fig8(header);
  for (std::size_t t = 0; t < tops.size(); ++t) {
    std::vector<std::string> cells = {format_number(tops[t])};
    for (std::size_t b = 0; b < l2.size(); ++b) {
      const double s = r.aggregates[b * tops.size() + t].mean_speedup;
      cells.push_back(format_number(s));
      series[b].y.push_back(s);
    }
    fig8.row(cells);
  }
  sink.file("fig8.csv", fig8.str());
  sink.file("fig8.svg", emit_svg(series, {"Speedup vs. cube throughput", "Cube throughput (TeraOps/s)",
                                          "Average speedup"}));
  return kOk;
}

inline int run(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    if (cfg.format != "csv" && cfg.format != "json") {
      throw CliError(kUsage, "--format must be csv or json");
    }
    Sink sink(cfg, out);
    switch (cfg.command) {
      case Command::kCatalog: return cmd_catalog(cfg, sink);
      case Command::kFootprint: return cmd_footprint(cfg, sink);
      case Command::kPassExplain: return cmd_pass_explain(cfg, sink);
      case Command::kSimulate: return cmd_simulate(cfg, sink);
      case Command::kDseL2: return cmd_dse_l2(cfg, sink);
      case Command::kDseCluster: return cmd_dse_cluster(cfg, sink);
      case Command::kDseBandwidth: return cmd_dse_bandwidth(cfg, sink);
      case Command::kDseCompute: return cmd_dse_compute(cfg, sink);
    }
  } catch (const CliError& e) {
    err << "error: " << e.what() << "\n";
    return e.code();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ShardError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

inline void add_common_flags(CLI::App& app, RunConfig& cfg) {
  app.add_option("-m,--model", cfg.models, "Catalog model name or model-config JSON path (repeatable)");
  app.add_option("--tp", cfg.tp, "Tensor-parallel degree (number of devices)");
  app.add_option("--batch", cfg.batch, "Batch size");
  app.add_option("--seq", cfg.seq, "Maximum sequence length (prompt 2/3, generation 1/3)");
  app.add_option("--l2-mb", cfg.l2_mb, "L2 capacity in MB");
  app.add_option("--link-gbps", cfg.link_gbps, "Interconnect bandwidth in Gbit/s");
  app.add_option("--link-latency-us", cfg.link_latency_us, "Interconnect latency in microseconds");
  app.add_option("--tops", cfg.tops, "Peak int8 throughput in TeraOps/s");
  app.add_option("--tops-per-core", cfg.tops_per_core, "Throughput per core in TeraOps/s");
  app.add_option("--l2-tbps", cfg.l2_tbps, "L2 bus bandwidth in TB/s");
  app.add_option("--hbm-tbps", cfg.hbm_tbps, "HBM bandwidth in TB/s");
  app.add_option("--hbm-gb", cfg.hbm_gb, "HBM capacity in GB");
  app.add_option("--area-per-core", cfg.area_per_core, "Area per core in mm^2");
  app.add_option("--area-per-mb-l2", cfg.area_per_mb_l2, "Area per MB of L2 SRAM in mm^2");
  app.add_option("--ring-factor", cfg.ring_factor, "Allreduce volume factor (default 2(N-1)/N)");
  app.add_option("--activation-overhead", cfg.activation_overhead,
                 "Activation traffic as a fraction of the weight/KV memory term (default 0.1)");
  app.add_flag("--no-prefetch", cfg.no_prefetch, "Disable the prefetch pass");
  app.add_flag("--explain", cfg.explain, "simulate: also write the prefetch pass report");
  app.add_option("-o,--out", cfg.out_dir, "Output directory");
  app.add_option("--format", cfg.format, "Tabular output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--grid", cfg.grid, "Swept values: start:stop:step or a,b,c");
  app.add_option("--l2-grid", cfg.l2_grid, "dse-compute: L2 bandwidths in TB/s");
  app.add_option("--threads", cfg.threads, "Sweep worker threads (0: all cores)");
}

// Returns the exit code when parsing ends the program (help, bad usage).
inline std::optional<int> parse_args(int argc, const char* const* argv, RunConfig& cfg,
                                     std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Prefetch-insertion and accelerator design-space exploration for "
               "tensor-parallel LLM inference"};
  app.require_subcommand(1);
  const std::pair<const char*, Command> commands[] = {
      {"catalog", Command::kCatalog},         {"footprint", Command::kFootprint},
      {"pass-explain", Command::kPassExplain}, {"simulate", Command::kSimulate},
      {"dse-l2", Command::kDseL2},             {"dse-cluster", Command::kDseCluster},
      {"dse-bandwidth", Command::kDseBandwidth}, {"dse-compute", Command::kDseCompute}};
  const std::map<std::string, const char*> help = {
      {"catalog", "List built-in model configurations"},
      {"footprint", "Per-layer attention/MLP memory footprint vs. TP degree"},
      {"pass-explain", "Run the prefetch pass on a decode layer and dump its report"},
      {"simulate", "Simulate one model: timeline trace and end-to-end latency"},
      {"dse-l2", "Sweep L2 capacity: latency and throughput density"},
      {"dse-cluster", "Sweep tensor-parallel cluster size"},
      {"dse-bandwidth", "Sweep interconnect bandwidth"},
      {"dse-compute", "Sweep peak throughput x L2 bandwidth"}};
  std::vector<std::pair<CLI::App*, Command>> subs;
  for (const auto& [name, command] : commands) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    add_common_flags(*sub, cfg);
    subs.emplace_back(sub, command);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  for (const auto& [sub, command] : subs) {
    if (sub->parsed()) cfg.command = command;
  }
  if (const char* path = std::getenv("PRESERVE_SPEC"); path && *path) cfg.spec_path = path;
  return std::nullopt;
}

}  // namespace tpsim::cli
