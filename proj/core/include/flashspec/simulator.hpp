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

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flashspec/drafting.hpp"
#include "flashspec/verification.hpp"

namespace flashspec {

// How flash streaming and verification compute combine within one target
// invocation. Sum matches sequential single-token measurements; max models
// layer-wise overlap.
enum class Overlap { kSum, kMax };

// Where output projection is priced: folded into the compute coefficients
// (autoregressive anchor), eagerly on the NPU for every verified row, or on
// demand on the CPU along the accepted path only.
enum class ProjectionMode { kFolded, kEager, kOnDemand };

struct HardwareConfig {
  std::string name;
  double io_ms_per_invocation = 990.6;
  Overlap overlap = Overlap::kMax;
  // Verification compute = c0 + c_row * |T| + c_leaf * L_T.
  double c0 = 88.194;
  double c_row = 3.006;
  double c_leaf = 2.0;
  double proj_ms_per_row = 20.0;
  double proj_cpu_ms_per_row = 30.0;
  double draft_cpu_ms = 12.0;
  double npu_n0 = 15.0;
  double npu_n1 = 2.0;
  int batch_min = 4;
  double dram_resident_frac = 0.0;
  // Fraction of target layers below the early-exit layer; pruned rows skip
  // the remaining 1 - frac of the per-row compute.
  double early_exit_frac = 0.5;
};

void validate(const HardwareConfig& config);

// Preset documents give the single-token compute time and I/O directly; c0
// is derived so that c0 + c_row + c_leaf reproduces the single-token compute.
HardwareConfig hardware_from_json(const nlohmann::json& doc);
nlohmann::json hardware_to_json(const HardwareConfig& config);
HardwareConfig load_hardware_preset(const std::filesystem::path& path);

double effective_io_ms(const HardwareConfig& config);
double combine(Overlap overlap, double io_ms, double compute_ms);

double verify_compute_ms(const HardwareConfig& config, TreeShape shape);
// Compute when `built` rows run up to the early-exit layer and only the
// `verified` rows continue.
double verify_compute_ms(const HardwareConfig& config, TreeShape built,
                         TreeShape verified);

// Flash-AR per-token latency: single-row compute plus I/O, summed.
double ar_step_latency(const HardwareConfig& config);

double verify_latency(const HardwareConfig& config, TreeShape shape,
                      Overlap overlap);
double verify_latency(const HardwareConfig& config, TreeShape shape);
double verify_latency(const HardwareConfig& config, TreeShape built,
                      TreeShape verified, Overlap overlap);

// Batch-aware draft pricing over ready batches: a batch smaller than
// batch_min runs serially on the CPU, larger ones run as one NPU batch.
double draft_schedule(std::span<const int> ready_counts,
                      const HardwareConfig& config);

struct ProjectionCost {
  double eager_ms = 0.0;
  double ondemand_ms = 0.0;
  int waste_rows = 0;
};

// Throws ContractError unless accepted_len + 1 <= rows.
ProjectionCost projection_accounting(int rows, int accepted_len,
                                     const HardwareConfig& config);

// NPU projection rate p solving  w p / (base + rows p) = fraction  with
// w = rows - used_rows: the per-row cost at which eager projection wastes
// `fraction` of verification time.
double calibrate_projection_rate(double fraction, double base_verify_ms,
                                 double rows, double used_rows);

struct SimulationOptions {
  Overlap verify_overlap = Overlap::kMax;
  ProjectionMode projection = ProjectionMode::kOnDemand;
};

struct CycleCost {
  double draft_ms = 0.0;
  double verify_io_ms = 0.0;
  double verify_compute_ms = 0.0;
  double verify_ms = 0.0;  // combined under the overlap policy
  double projection_ms = 0.0;
  int projections_eager = 0;
  int projections_ondemand = 0;
  int rows_after_prune = 0;
  double waste_ms = 0.0;
  int accepted_len = 0;
  int emitted = 0;
  double total_ms = 0.0;
};

struct ScheduleTrace {
  std::vector<CycleCost> cycles;
  double draft_ms = 0.0;
  double verify_ms = 0.0;
  double projection_ms = 0.0;
  double waste_ms = 0.0;
  double total_ms = 0.0;
};

struct Metrics {
  double tokens_per_s = 0.0;
  double mean_accepted_len = 0.0;
  double target_calls_per_token = 0.0;
  double waste_fraction = 0.0;
  double speedup_vs_flash_ar = 0.0;
  int emitted = 0;
  int cycles = 0;
};

struct Simulation {
  ScheduleTrace trace;
  Metrics metrics;
};

// Metrics from a trace alone; speedup is against Flash-AR on `config`.
Metrics compute_metrics(const ScheduleTrace& trace,
                        const HardwareConfig& config);

Simulation simulate_decode(const DecodeResult& run,
                           const HardwareConfig& config,
                           const SimulationOptions& options);

}  // namespace flashspec
