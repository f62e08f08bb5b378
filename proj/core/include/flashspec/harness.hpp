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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flashspec/drafting.hpp"
#include "flashspec/models.hpp"
#include "flashspec/predictor.hpp"
#include "flashspec/pruning.hpp"
#include "flashspec/simulator.hpp"
#include "flashspec/verification.hpp"

namespace flashspec {

enum class Policy { kFlashAr, kChainSd, kBalancedTree, kLever, kLeverNoPrune };

std::string policy_name(Policy policy);
Policy parse_policy(const std::string& name);

struct ModelSpec {
  std::string type = "layered";  // "layered" or "tabular"
  int vocab = 32;
  int context = 4;  // m for layered, Markov order for tabular
  int layers = 6;
  int hidden = 16;
  double sharpness = 3.0;    // tabular
  double logit_scale = 4.0;  // layered
  std::uint64_t seed = 1;
};

struct DraftModelSpec {
  std::string mixing = "geometric";  // "linear" or "geometric"
  double alpha = 0.5;
  double sharpness = 3.0;
  std::uint64_t seed = 2;
};

struct ExperimentConfig {
  ModelSpec model;
  DraftModelSpec draft_model;
  Policy policy = Policy::kLever;

  DraftConfig drafting;
  int chain_length = 8;
  int balanced_branching = 2;
  int balanced_budget = 16;
  ReliabilityState reliability;

  PruneConfig pruning;

  int predictor_layer = 0;  // 0 picks ceil(D / 2)
  std::string predictor_checkpoint;
  DatasetSpec dataset;
  TrainConfig train;

  std::string preset = "oneplus12_llama31_8b";
  std::string preset_dir;
  nlohmann::json hardware_overrides = nlohmann::json::object();

  int horizon = 128;
  int prompt_length = 8;
  int trials = 10;
  std::uint64_t seed = 1;

  std::filesystem::path output_dir = ".";
};

void validate(const ExperimentConfig& config);

// The experiment document minus the output location, which does not affect
// results and is left out of the hash.
nlohmann::json config_to_json(const ExperimentConfig& config);
// Accepts either a config document or a report embedding one under
// "config". Unknown keys are rejected; run.seed, model.seed and
// draft_model.seed must be present.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

// Sets a dotted key ("drafting.k") to `value`, parsed as JSON when it parses
// and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& dotted_key,
                    const std::string& value);

std::string config_hash(const ExperimentConfig& config);

std::filesystem::path resolve_preset_path(const ExperimentConfig& config);
HardwareConfig resolve_hardware(const ExperimentConfig& config);

struct ModelBundle {
  std::shared_ptr<const ProbModel> target;
  std::shared_ptr<const LayeredTargetModel> layered;  // null for tabular
  std::shared_ptr<const ProbModel> draft;
};

ModelBundle make_models(const ExperimentConfig& config);

int predictor_layer(const ExperimentConfig& config);

struct PredictorReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double initial_agreement = 0.0;
  double final_agreement = 0.0;
};

struct TrainedPredictor {
  EarlyExitPredictor predictor;
  std::optional<PredictorReport> report;  // empty when loaded from disk
};

// Loads the configured checkpoint, or trains on a generated dataset.
TrainedPredictor train_predictor(const ExperimentConfig& config,
                                 const ModelBundle& models);

SimulationOptions simulation_options(Policy policy);

// Latency profile seeded from the simulator over |T| <= max_nodes.
LatencyProfile offline_profile(const HardwareConfig& hardware, int max_nodes);

std::vector<TokenId> trial_prompt(const ExperimentConfig& config, int trial);

struct TrialOutcome {
  int trial = 0;
  std::uint64_t seed = 0;
  std::vector<TokenId> tokens;
  DecodeResult decode;
  Simulation simulation;
};

// One seeded trial. `predictor` is required for the lever policy on a
// layered target and ignored otherwise. `observer` sees every cycle.
TrialOutcome run_trial(const ExperimentConfig& config, const ModelBundle& models,
                       const HardwareConfig& hardware,
                       const EarlyExitPredictor* predictor, int trial,
                       std::function<void(const CycleView&)> observer = {});

struct Aggregate {
  // Geometric means over trials, except waste_fraction (arithmetic: it is
  // zero for most policies).
  double tokens_per_s = 0.0;
  double mean_accepted_len = 0.0;
  double target_calls_per_token = 0.0;
  double speedup_vs_flash_ar = 0.0;
  double waste_fraction = 0.0;
};

double geometric_mean(std::span<const double> values);
Aggregate aggregate(std::span<const Metrics> trials);

struct Report {
  ExperimentConfig config;
  std::string config_hash;
  HardwareConfig hardware;
  std::optional<PredictorReport> predictor;
  std::vector<TrialOutcome> trials;
  Aggregate aggregate;
};

Report run_experiment(const ExperimentConfig& config);

nlohmann::json report_to_json(const Report& report);
std::string report_csv(const Report& report);
std::string trace_csv(const Report& report);

// Writes report.json, report.csv and trace.csv into `dir`.
void write_report(const Report& report, const std::filesystem::path& dir);

struct ProjectionCalibration {
  double proj_ms_per_row = 0.0;
  double mean_rows = 0.0;
  double mean_used_rows = 0.0;
  double mean_verify_ms = 0.0;
  int cycles = 0;
};

// Runs the balanced-tree policy of `config` and solves for the NPU
// projection rate at which eager projection wastes `fraction` of the
// verification stage.
ProjectionCalibration calibrate_projection(const ExperimentConfig& config,
                                           double fraction);

struct ComparisonRow {
  Policy policy = Policy::kLever;
  Aggregate aggregate;
  double normalized_tokens_per_s = 0.0;
  std::vector<std::vector<TokenId>> tokens;  // per trial
};

struct Comparison {
  Policy baseline = Policy::kLever;
  std::vector<ComparisonRow> rows;
};

// Runs every config and normalizes tokens/s to `baseline`, which must be one
// of the policies. Throws ConfigError when the configs differ in model,
// draft model, hardware, horizon, prompt length, trials or seed.
Comparison compare_policies(const std::vector<ExperimentConfig>& configs,
                            Policy baseline);

std::string comparison_table(const Comparison& comparison);
nlohmann::json comparison_to_json(const Comparison& comparison);

}  // namespace flashspec
