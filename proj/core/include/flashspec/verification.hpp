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

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "flashspec/drafting.hpp"
#include "flashspec/models.hpp"
#include "flashspec/pruning.hpp"
#include "flashspec/tree.hpp"

namespace flashspec {

struct VerificationResult {
  VerificationLayout layout;
  std::vector<NodeId> accepted_path;    // starts at the root
  int accepted_len = 0;                 // accepted draft tokens
  TokenId fallback = 0;
  std::vector<TokenId> emitted;         // accepted tokens, then fallback
  std::vector<TokenId> per_row_argmax;  // target argmax for each layout row
};

// Greedy tree verification. Every flattened row gets the target's argmax
// given context + path; acceptance then walks from the root, descending while
// that argmax names a verifiable child, and emits it as the fallback token
// where it does not.
VerificationResult verify_tree(const ProbModel& target,
                               std::span<const TokenId> context,
                               const TokenTree& tree);

enum class TreePolicy {
  kAutoregressive,  // root only: one target call per token
  kChain,           // k = 1 chain of fixed length, no stopping rule
  kBalanced,        // branching-2 breadth-first fill up to a row budget
  kGreedy,          // gain/cost construction with the stopping rule
};

struct CycleRecord {
  int cycle = 0;
  int accepted_len = 0;
  // Accepted length had the unpruned tree been verified; equals
  // accepted_len when no pruning happened.
  int full_accepted_len = 0;
  int emitted = 0;  // after truncation at the horizon
  TreeShape shape;           // built tree
  TreeShape verified_shape;  // tree that continued past the early-exit layer
  int expansions = 0;
  std::vector<int> expansions_per_depth;
  bool pruning_applied = false;
  bool prune_rejected = false;
  double reliability = 1.0;  // r used while drafting this cycle
  double estimated_gain = 1.0;
  double estimated_cycle_ms = 0.0;
};

struct CycleView {
  const BuildResult& build;
  const PruneOutcome* prune;  // null when pruning is off
  const TokenTree& verified_tree;
  const VerificationResult& verification;
  const CycleRecord& record;
};

struct DecodeOptions {
  TreePolicy policy = TreePolicy::kGreedy;
  DraftConfig draft;
  int chain_length = 8;
  int balanced_branching = 2;
  int balanced_budget = 16;

  // Pruning runs when a scorer is supplied.
  const BranchScorer* scorer = nullptr;
  PruneConfig prune;

  ReliabilityState reliability;
  bool pin_reliability = false;
  LatencyProfile profile;
  double initial_draft_ms = 10.0;

  // Cost feedback: measured verification latency for (built, verified)
  // shapes, and total draft latency for a per-depth expansion histogram.
  std::function<double(TreeShape, TreeShape)> measure_verify;
  std::function<double(std::span<const int>)> measure_draft;

  std::function<void(const CycleView&)> observer;
};

struct DecodeResult {
  std::vector<TokenId> tokens;
  std::vector<CycleRecord> cycles;
  ReliabilityState reliability;
  LatencyProfile profile;
};

// Speculative decode loop: draft a tree, optionally prune it, verify it,
// append the emitted tokens and fold feedback into r and the latency
// profile, until `horizon` tokens exist. The last cycle is truncated.
DecodeResult run_decode(const ProbModel& target, const ProbModel& draft,
                        std::span<const TokenId> prompt, int horizon,
                        const DecodeOptions& options);

}  // namespace flashspec
