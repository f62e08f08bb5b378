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

#include <compare>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "flashspec/models.hpp"
#include "flashspec/tree.hpp"

namespace flashspec {

// Feedback-driven confidence factor r. Updated once per speculative cycle
// as an exponential moving average of "the target token at the point where
// acceptance stopped was in the drafted candidate set".
struct ReliabilityState {
  double r = 1.0;
  double beta = 0.9;
  double r_min = 0.05;
};

// clamp(r * p, 0, 1). Strictly order-preserving within a set for r > 0.
double calibrate(double p_draft, const CandidateSet& candidates,
                 const ReliabilityState& reliability);

ReliabilityState update_reliability(ReliabilityState state, bool hit);

// Verification shape (|T|, L_T).
struct TreeShape {
  int nodes = 1;
  int leaves = 1;

  auto operator<=>(const TreeShape&) const = default;
};

// Shape -> verification latency. Exact hits return the stored mean; misses
// return the nearest stored shape by L1 distance (ties to the smaller node
// count, then the smaller leaf count) times `penalty`.
class LatencyProfile {
 public:
  explicit LatencyProfile(double penalty = 1.1);

  // Offline measurement; replaces any stored value.
  void seed(TreeShape shape, double ms);
  // Online measurement; folded into the running mean for the shape.
  void record(TreeShape shape, double ms);

  double lookup(TreeShape shape) const;

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  double penalty() const { return penalty_; }
  std::map<TreeShape, double> entries() const;

  // {"penalty": p, "entries": [[nodes, leaves, ms], ...]}
  nlohmann::json to_json() const;
  static LatencyProfile from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static LatencyProfile load(const std::filesystem::path& path);

 private:
  struct Entry {
    double ms = 0.0;
    long count = 0;
  };

  double penalty_;
  std::map<TreeShape, Entry> entries_;
};

double estimate_verify_cost(const LatencyProfile& profile, TreeShape shape);

// Moving average over the last `window` per-expansion draft latencies.
class DraftLatencyAverage {
 public:
  explicit DraftLatencyAverage(double initial_ms, std::size_t window = 64);

  void push(double ms);
  double value() const;

 private:
  double initial_;
  std::size_t window_;
  std::deque<double> samples_;
  double sum_ = 0.0;
};

struct DraftConfig {
  int k = 4;
  int max_depth = 8;
  double b_min = 0.02;
  // Non-root node budget; 0 means unbounded.
  int max_nodes = 0;
  bool stopping_rule = true;
  double cost_floor_ms = 0.01;
};

void validate(const DraftConfig& config);

// A node may spawn a candidate set iff depth < max_depth and reach >= b_min.
bool expandable(int depth, double reach, const DraftConfig& config);

struct GainCostEstimate {
  double gain = 1.0;
  double draft_cost = 0.0;
  double verify_cost = 0.0;
  double cycle_cost = 0.0;
};

// 1 + sum of reach over non-root, non-shadow nodes.
double estimate_gain(const TokenTree& tree);

// Shape after inserting a child under `parent`.
TreeShape shape_after_insert(const TokenTree& tree, NodeId parent);

// [verify(after) - verify(before)] + (expandable ? draft estimate : 0),
// floored at config.cost_floor_ms.
double marginal_cost(const TokenTree& tree, const FrontierEntry& entry,
                     const LatencyProfile& profile, double draft_ms_estimate,
                     const DraftConfig& config);

enum class BuildExit { kFrontierEmpty, kStoppingRule, kNodeBudget };

struct BuildStep {
  FrontierEntry chosen;
  NodeId inserted = kNoParent;
  double ratio = 0.0;            // chosen b / dC
  double marginal = 0.0;         // chosen dC
  double gain_before = 1.0;      // G(T) before insertion
  double cycle_cost_before = 0;  // C_cycle(T) before insertion
  bool expanded = false;
  std::vector<FrontierEntry> frontier;  // only with record_frontier
};

struct BuildTrace {
  std::vector<BuildStep> steps;
  BuildExit exit = BuildExit::kFrontierEmpty;
  // Best frontier ratio and the average rate at exit (unset on empty exit).
  double exit_best_ratio = 0.0;
  double exit_average_rate = 0.0;
  int expansions = 0;
  // Expanded nodes grouped by depth; nodes of one depth form a ready batch.
  std::vector<int> expansions_per_depth;
};

struct BuildResult {
  TokenTree tree;
  GainCostEstimate estimate;
  BuildTrace trace;
};

struct BuildOptions {
  DraftConfig config;
  bool record_frontier = false;
};

// Greedy gain/cost token-tree construction. Repeatedly inserts the frontier
// node with the largest reach / marginal-cost ratio (ties: higher reach,
// smaller token, smaller parent) until the frontier empties, the node budget
// is hit, or the best ratio no longer beats G(T) / C_cycle(T). Candidates
// left in the frontier become shadow children of their parents.
BuildResult build_tree(std::span<const TokenId> context, const ProbModel& draft,
                       const BuildOptions& options,
                       const ReliabilityState& reliability,
                       const LatencyProfile& profile,
                       const DraftLatencyAverage& draft_latency);

// Fixed-topology baseline: breadth-first fill with `branching` children per
// node until the tree holds `budget` verification rows (root included).
BuildResult build_balanced_tree(std::span<const TokenId> context,
                                const ProbModel& draft, int branching,
                                int budget);

}  // namespace flashspec
