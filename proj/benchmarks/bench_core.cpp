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

#include <memory>

#include <benchmark/benchmark.h>

#include "flashspec/harness.hpp"

namespace flashspec {
namespace {

ExperimentConfig bench_config() {
  ExperimentConfig c;
  c.preset_dir = FLASHSPEC_BENCH_PRESET_DIR;
  return c;
}

struct Setup {
  ExperimentConfig config = bench_config();
  HardwareConfig hardware = resolve_hardware(config);
  ModelBundle models = make_models(config);
  LatencyProfile profile = offline_profile(hardware, 64);
  std::vector<TokenId> context = trial_prompt(config, 0);

  BuildResult build(int max_nodes) const {
    BuildOptions opt;
    opt.config = config.drafting;
    opt.config.max_nodes = max_nodes;
    opt.config.stopping_rule = max_nodes == 0;
    return build_tree(context, *models.draft, opt, {}, profile,
                      DraftLatencyAverage(hardware.draft_cpu_ms));
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

void BM_BuildTree(benchmark::State& state) {
  const Setup& s = setup();
  for (auto _ : state) {
    benchmark::DoNotOptimize(s.build(static_cast<int>(state.range(0))));
  }
}
BENCHMARK(BM_BuildTree)->Arg(0)->Arg(16)->Arg(64);

void BM_Flatten(benchmark::State& state) {
  const TokenTree tree = setup().build(static_cast<int>(state.range(0))).tree;
  for (auto _ : state) benchmark::DoNotOptimize(flatten(tree));
  state.counters["rows"] = tree.node_count();
}
BENCHMARK(BM_Flatten)->Arg(16)->Arg(64)->Arg(128);

void BM_VerifyTree(benchmark::State& state) {
  const Setup& s = setup();
  const TokenTree tree = s.build(static_cast<int>(state.range(0))).tree;
  for (auto _ : state) {
    benchmark::DoNotOptimize(verify_tree(*s.models.target, s.context, tree));
  }
}
BENCHMARK(BM_VerifyTree)->Arg(16)->Arg(64);

void BM_HiddenStates(benchmark::State& state) {
  const Setup& s = setup();
  const TokenTree tree = s.build(static_cast<int>(state.range(0))).tree;
  const VerificationLayout layout = flatten(tree);
  const int layer = predictor_layer(s.config);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hidden_states(*s.models.layered, s.context, tree, layout, layer));
  }
}
BENCHMARK(BM_HiddenStates)->Arg(16)->Arg(64);

void BM_SimulateDecode(benchmark::State& state) {
  const Setup& s = setup();
  ExperimentConfig c = s.config;
  c.policy = Policy::kLeverNoPrune;
  const TrialOutcome trial = run_trial(c, s.models, s.hardware, nullptr, 0);
  const SimulationOptions opts = simulation_options(c.policy);
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_decode(trial.decode, s.hardware, opts));
  }
  state.counters["cycles"] = static_cast<double>(trial.decode.cycles.size());
}
BENCHMARK(BM_SimulateDecode);

}  // namespace
}  // namespace flashspec

BENCHMARK_MAIN();
