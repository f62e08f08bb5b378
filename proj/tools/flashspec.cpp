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

// flashspec: run, compare and profile speculative decoding experiments.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flashspec/error.hpp"
#include "flashspec/harness.hpp"
#include "flashspec/simulator.hpp"

namespace {

using flashspec::ExperimentConfig;
using nlohmann::json;

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string seed;
  std::string policy;
  std::string preset;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_policy) {
  cmd->add_option("--config", f.config, "Experiment JSON (or a report.json)");
  cmd->add_option("--set", f.overrides, "Override a dotted key: key=value");
  cmd->add_option("--seed", f.seed, "Run seed (run.seed)");
  cmd->add_option("--preset", f.preset, "Hardware preset name or path");
  if (with_policy) cmd->add_option("--policy", f.policy, "Decoding policy");
}

json default_document() {
  return flashspec::config_to_json(ExperimentConfig{});
}

// Loads the base document and folds the flag overrides into it, so the
// resulting config is exactly what a report will embed.
ExperimentConfig build_config(const CommonFlags& f) {
  json doc = default_document();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw flashspec::ConfigError("cannot read config " + f.config);
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw flashspec::ConfigError(f.config + ": " + e.what());
    }
    if (doc.contains("config") && doc.contains("config_hash")) {
      doc = json(doc.at("config"));
    }
  }
  for (const std::string& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw flashspec::ConfigError("--set expects key=value, got '" + kv + "'");
    }
    flashspec::apply_override(doc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!f.seed.empty()) flashspec::apply_override(doc, "run.seed", f.seed);
  if (!f.policy.empty()) doc["policy"] = f.policy;
  if (!f.preset.empty()) flashspec::apply_override(doc, "hardware.preset", '"' + f.preset + '"');
  ExperimentConfig config = flashspec::config_from_json(doc);
  if (!f.out.empty()) config.output_dir = f.out;
  return config;
}

void print_aggregate(const std::string& label, const flashspec::Aggregate& a) {
  std::printf("%-14s tokens/s %.4f  accepted %.3f  calls/token %.4f  "
              "speedup %.3fx  waste %.4f\n",
              label.c_str(), a.tokens_per_s, a.mean_accepted_len,
              a.target_calls_per_token, a.speedup_vs_flash_ar, a.waste_fraction);
}

int cmd_run(const CommonFlags& f) {
  const ExperimentConfig config = build_config(f);
  const flashspec::Report report = flashspec::run_experiment(config);
  flashspec::write_report(report, config.output_dir);
  std::printf("config %s  policy %s  trials %d\n", report.config_hash.c_str(),
              flashspec::policy_name(config.policy).c_str(), config.trials);
  if (report.predictor) {
    std::printf("predictor loss %.4f -> %.4f  agreement %.3f -> %.3f\n",
                report.predictor->initial_loss, report.predictor->final_loss,
                report.predictor->initial_agreement,
                report.predictor->final_agreement);
  }
  print_aggregate(flashspec::policy_name(config.policy), report.aggregate);
  std::printf("wrote %s\n", (config.output_dir / "report.json").string().c_str());
  return 0;
}

int cmd_compare(const CommonFlags& f, const std::vector<std::string>& policies,
                const std::string& baseline) {
  const ExperimentConfig base = build_config(f);
  std::vector<ExperimentConfig> configs;
  for (const std::string& name : policies) {
    ExperimentConfig c = base;
    c.policy = flashspec::parse_policy(name);
    configs.push_back(c);
  }
  const auto cmp = flashspec::compare_policies(configs, flashspec::parse_policy(baseline));
  const std::string table = flashspec::comparison_table(cmp);
  std::fputs(table.c_str(), stdout);
  if (!f.out.empty()) {
    std::filesystem::create_directories(f.out);
    std::ofstream(std::filesystem::path(f.out) / "comparison.csv") << table;
    std::ofstream(std::filesystem::path(f.out) / "comparison.json")
        << flashspec::comparison_to_json(cmp).dump(2) << '\n';
  }
  return 0;
}

int cmd_train(const CommonFlags& f, const std::string& checkpoint) {
  ExperimentConfig config = build_config(f);
  config.predictor_checkpoint.clear();
  const auto models = flashspec::make_models(config);
  const auto trained = flashspec::train_predictor(config, models);
  trained.predictor.save(checkpoint);
  const auto& r = *trained.report;
  std::printf("layer %d  loss %.5f -> %.5f  agreement %.3f -> %.3f\nwrote %s\n",
              trained.predictor.layer(), r.initial_loss, r.final_loss,
              r.initial_agreement, r.final_agreement, checkpoint.c_str());
  return 0;
}

int cmd_profile_build(const CommonFlags& f, int max_nodes, const std::string& out) {
  const ExperimentConfig config = build_config(f);
  const auto hardware = flashspec::resolve_hardware(config);
  const auto profile = flashspec::offline_profile(hardware, max_nodes);
  profile.save(out);
  std::printf("%s: %zu shapes up to |T|=%d, wrote %s\n", hardware.name.c_str(),
              profile.size(), max_nodes, out.c_str());
  return 0;
}

int cmd_profile_inspect(const std::string& in, int nodes, int leaves) {
  const auto profile = flashspec::LatencyProfile::load(in);
  std::printf("entries %zu  miss penalty %.3f\n", profile.size(), profile.penalty());
  if (nodes > 0) {
    std::printf("lookup |T|=%d L=%d -> %.4f ms\n", nodes, leaves,
                profile.lookup({nodes, leaves}));
    return 0;
  }
  for (const auto& [shape, ms] : profile.entries()) {
    if (shape.leaves == 1 || shape.leaves == shape.nodes) {
      std::printf("  |T|=%4d L=%4d  %.4f ms\n", shape.nodes, shape.leaves, ms);
    }
  }
  return 0;
}

int cmd_calibrate(const CommonFlags& f, double waste_ms, double verify_ms) {
  const ExperimentConfig config = build_config(f);
  const auto cal = flashspec::calibrate_projection(config, waste_ms / verify_ms);
  std::printf("cycles %d  rows %.4f  used %.4f  verify %.4f ms\n"
              "proj_ms_per_row %.6f\n",
              cal.cycles, cal.mean_rows, cal.mean_used_rows, cal.mean_verify_ms,
              cal.proj_ms_per_row);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flashspec: flash-backed speculative decoding experiments"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  auto* run = app.add_subcommand("run", "Run one experiment and write reports");
  add_common(run, run_flags, true);
  run->add_option("--out", run_flags.out, "Output directory");

  CommonFlags cmp_flags;
  std::vector<std::string> policies{"flash_ar", "chain_sd", "balanced_tree",
                                    "lever_noprune", "lever"};
  std::string baseline = "lever";
  auto* compare = app.add_subcommand("compare", "Compare policies on shared settings");
  add_common(compare, cmp_flags, false);
  compare->add_option("--out", cmp_flags.out, "Output directory");
  compare->add_option("--policies", policies, "Policies to run")->delimiter(',');
  compare->add_option("--baseline", baseline, "Policy to normalize against");

  CommonFlags train_flags;
  std::string checkpoint = "predictor.json";
  auto* train = app.add_subcommand("train-predictor", "Train the early-exit predictor");
  add_common(train, train_flags, false);
  train->add_option("--out", checkpoint, "Checkpoint file");

  auto* profile = app.add_subcommand("profile", "Build or inspect latency profiles");
  profile->require_subcommand(1);
  CommonFlags prof_flags;
  int max_nodes = 256;
  std::string profile_out = "profile.json";
  auto* build = profile->add_subcommand("build", "Seed a profile from a preset");
  add_common(build, prof_flags, false);
  build->add_option("--max-nodes", max_nodes, "Largest |T| in the grid")
      ->check(CLI::PositiveNumber);
  build->add_option("--out", profile_out, "Profile file");

  std::string profile_in;
  int nodes = 0;
  int leaves = 1;
  auto* inspect = profile->add_subcommand("inspect", "Print a profile or one lookup");
  inspect->add_option("file", profile_in, "Profile file")->required();
  inspect->add_option("--nodes", nodes, "Look up this |T|");
  inspect->add_option("--leaves", leaves, "Look up this L_T");

  CommonFlags cal_flags;
  double waste_ms = 188.0;
  double verify_ms = 828.0;
  auto* calibrate = profile->add_subcommand(
      "calibrate-projection", "Solve the NPU projection rate for a waste target");
  add_common(calibrate, cal_flags, false);
  calibrate->add_option("--waste-ms", waste_ms, "Wasted projection time");
  calibrate->add_option("--verify-ms", verify_ms, "Verification time");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_flags);
    if (*compare) return cmd_compare(cmp_flags, policies, baseline);
    if (*train) return cmd_train(train_flags, checkpoint);
    if (*build) return cmd_profile_build(prof_flags, max_nodes, profile_out);
    if (*inspect) return cmd_profile_inspect(profile_in, nodes, leaves);
    if (*calibrate) return cmd_calibrate(cal_flags, waste_ms, verify_ms);
  } catch (const flashspec::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const flashspec::TrainingDivergence& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
