// Copyright 2026 The FlashSpec Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flashspec/simulator.hpp"

#include <algorithm>
#include <fstream>

#include "flashspec/error.hpp"

namespace flashspec {

void validate(const HardwareConfig& c) {
  const double nonneg[] = {c.io_ms_per_invocation, c.c0, c.c_row, c.c_leaf,
                           c.proj_ms_per_row, c.proj_cpu_ms_per_row,
                           c.draft_cpu_ms, c.npu_n0, c.npu_n1};
  for (double v : nonneg) {
    if (!(v >= 0.0)) throw ConfigError("hardware latencies must be >= 0");
  }
  if (c.batch_min < 1) throw ConfigError("hardware: batch_min must be >= 1");
  if (!(c.dram_resident_frac >= 0.0 && c.dram_resident_frac <= 1.0)) {
    throw ConfigError("hardware: dram_resident_frac must lie in [0, 1]");
  }
  if (!(c.early_exit_frac >= 0.0 && c.early_exit_frac <= 1.0)) {
    throw ConfigError("hardware: early_exit_frac must lie in [0, 1]");
  }
}

namespace {

Overlap parse_overlap(const std::string& s) {
  if (s == "sum") return Overlap::kSum;
  if (s == "max") return Overlap::kMax;
  throw ConfigError("unknown overlap policy '" + s + "'");
}

}  // namespace

HardwareConfig hardware_from_json(const nlohmann::json& doc) {
  HardwareConfig c;
  c.name = doc.value("name", std::string{});
  c.io_ms_per_invocation = doc.value("io_ms", c.io_ms_per_invocation);
  c.overlap = parse_overlap(doc.value("overlap", std::string{"max"}));
  c.c_row = doc.value("c_row", c.c_row);
  c.c_leaf = doc.value("c_leaf", c.c_leaf);
  if (doc.contains("compute_ms")) {
    c.c0 = doc.at("compute_ms").get<double>() - c.c_row - c.c_leaf;
  } else {
    c.c0 = doc.value("c0", c.c0);
  }
  c.proj_ms_per_row = doc.value("proj_ms_per_row", c.proj_ms_per_row);
  c.proj_cpu_ms_per_row = doc.value("proj_cpu_ms_per_row", c.proj_cpu_ms_per_row);
  c.draft_cpu_ms = doc.value("draft_cpu_ms", c.draft_cpu_ms);
  c.npu_n0 = doc.value("npu_n0", c.npu_n0);
  c.npu_n1 = doc.value("npu_n1", c.npu_n1);
  c.batch_min = doc.value("batch_min", c.batch_min);
  c.dram_resident_frac = doc.value("dram_resident_frac", c.dram_resident_frac);
  c.early_exit_frac = doc.value("early_exit_frac", c.early_exit_frac);
  validate(c);
  return c;
}

nlohmann::json hardware_to_json(const HardwareConfig& c) {
  return {{"name", c.name},
          {"io_ms", c.io_ms_per_invocation},
          {"overlap", c.overlap == Overlap::kSum ? "sum" : "max"},
          {"c0", c.c0},
          {"c_row", c.c_row},
          {"c_leaf", c.c_leaf},
          {"proj_ms_per_row", c.proj_ms_per_row},
          {"proj_cpu_ms_per_row", c.proj_cpu_ms_per_row},
          {"draft_cpu_ms", c.draft_cpu_ms},
          {"npu_n0", c.npu_n0},
          {"npu_n1", c.npu_n1},
          {"batch_min", c.batch_min},
          {"dram_resident_frac", c.dram_resident_frac},
          {"early_exit_frac", c.early_exit_frac}};
}

HardwareConfig load_hardware_preset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read hardware preset " + path.string());
  return hardware_from_json(nlohmann::json::parse(in));
}

double effective_io_ms(const HardwareConfig& c) {
  return (1.0 - c.dram_resident_frac) * c.io_ms_per_invocation;
}

double combine(Overlap overlap, double io_ms, double compute_ms) {
  return overlap == Overlap::kSum ? io_ms + compute_ms
                                  : std::max(io_ms, compute_ms);
}

double verify_compute_ms(const HardwareConfig& c, TreeShape shape) {
  return c.c0 + c.c_row * shape.nodes + c.c_leaf * shape.leaves;
}

double verify_compute_ms(const HardwareConfig& c, TreeShape built,
                         TreeShape verified) {
  const double rows = built.nodes * c.early_exit_frac +
                      verified.nodes * (1.0 - c.early_exit_frac);
  return c.c0 + c.c_row * rows + c.c_leaf * verified.leaves;
}

double ar_step_latency(const HardwareConfig& c) {
  return verify_latency(c, TreeShape{1, 1}, Overlap::kSum);
}

double verify_latency(const HardwareConfig& c, TreeShape shape,
                      Overlap overlap) {
  if (shape.nodes < 1) throw ContractError("verify_latency: |T| must be >= 1");
  return combine(overlap, effective_io_ms(c), verify_compute_ms(c, shape));
}

double verify_latency(const HardwareConfig& c, TreeShape shape) {
  return verify_latency(c, shape, c.overlap);
}

double verify_latency(const HardwareConfig& c, TreeShape built,
                      TreeShape verified, Overlap overlap) {
  if (verified.nodes < 1) throw ContractError("verify_latency: |T| must be >= 1");
  return combine(overlap, effective_io_ms(c), verify_compute_ms(c, built, verified));
}

double draft_schedule(std::span<const int> ready_counts,
                      const HardwareConfig& c) {
  double total = 0.0;
  for (int count : ready_counts) {
    if (count <= 0) continue;
    total += count < c.batch_min ? count * c.draft_cpu_ms
                                 : c.npu_n0 + c.npu_n1 * count;
  }
  return total;
}

ProjectionCost projection_accounting(int rows, int accepted_len,
                                     const HardwareConfig& c) {
  if (accepted_len < 0 || accepted_len + 1 > rows) {
    throw ContractError("projection accounting needs accepted_len + 1 <= rows");
  }
  const int used = accepted_len + 1;
  return {rows * c.proj_ms_per_row, used * c.proj_cpu_ms_per_row, rows - used};
}

double calibrate_projection_rate(double fraction, double base_verify_ms,
                                 double rows, double used_rows) {
  const double waste_rows = rows - used_rows;
  const double denom = waste_rows - fraction * rows;
  if (!(fraction > 0.0 && fraction < 1.0) || !(denom > 0.0)) {
    throw ConfigError("projection calibration target is unreachable");
  }
  return fraction * base_verify_ms / denom;
}

Metrics compute_metrics(const ScheduleTrace& trace, const HardwareConfig& c) {
  Metrics m;
  m.cycles = static_cast<int>(trace.cycles.size());
  double accepted = 0.0;
  double verify_stage = 0.0;
  for (const CycleCost& cc : trace.cycles) {
    m.emitted += cc.emitted;
    accepted += cc.accepted_len;
    verify_stage += cc.verify_ms + cc.projection_ms;
  }
  if (m.cycles > 0) m.mean_accepted_len = accepted / m.cycles;
  if (m.emitted > 0) {
    m.target_calls_per_token = static_cast<double>(m.cycles) / m.emitted;
  }
  if (trace.total_ms > 0.0) {
    m.tokens_per_s = m.emitted / (trace.total_ms / 1000.0);
  }
  if (verify_stage > 0.0) m.waste_fraction = trace.waste_ms / verify_stage;
  m.speedup_vs_flash_ar = m.tokens_per_s / (1000.0 / ar_step_latency(c));
  return m;
}

Simulation simulate_decode(const DecodeResult& run, const HardwareConfig& c,
                           const SimulationOptions& options) {
  validate(c);
  Simulation sim;
  ScheduleTrace& trace = sim.trace;
  for (const CycleRecord& rec : run.cycles) {
    CycleCost cc;
    cc.accepted_len = rec.accepted_len;
    cc.emitted = rec.emitted;
    cc.rows_after_prune = rec.verified_shape.nodes;
    cc.draft_ms = draft_schedule(rec.expansions_per_depth, c);
    cc.verify_io_ms = effective_io_ms(c);
    cc.verify_compute_ms = verify_compute_ms(c, rec.shape, rec.verified_shape);
    cc.verify_ms =
        combine(options.verify_overlap, cc.verify_io_ms, cc.verify_compute_ms);

    switch (options.projection) {
      case ProjectionMode::kFolded:
        break;
      case ProjectionMode::kEager: {
        const auto p = projection_accounting(cc.rows_after_prune,
                                             rec.accepted_len, c);
        cc.projection_ms = p.eager_ms;
        cc.projections_eager = cc.rows_after_prune;
        cc.waste_ms = p.waste_rows * c.proj_ms_per_row;
        break;
      }
      case ProjectionMode::kOnDemand: {
        const auto p = projection_accounting(cc.rows_after_prune,
                                             rec.accepted_len, c);
        cc.projection_ms = p.ondemand_ms;
        cc.projections_ondemand = rec.accepted_len + 1;
        break;
      }
    }
    cc.total_ms = cc.draft_ms + cc.verify_ms + cc.projection_ms;

    trace.draft_ms += cc.draft_ms;
    trace.verify_ms += cc.verify_ms;
    trace.projection_ms += cc.projection_ms;
    trace.waste_ms += cc.waste_ms;
    trace.total_ms += cc.total_ms;
    trace.cycles.push_back(cc);
  }
  sim.metrics = compute_metrics(trace, c);
  return sim;
}

}  // namespace flashspec
