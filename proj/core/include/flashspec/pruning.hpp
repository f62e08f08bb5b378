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

#include <span>
#include <vector>

#include "flashspec/models.hpp"
#include "flashspec/predictor.hpp"
#include "flashspec/tree.hpp"

namespace flashspec {

struct PruneConfig {
  double theta = 0.1;
  double tau_e = 1.0;
  int root_keep = 2;
  double min_keep_frac = 0.25;
  int min_leaves = 2;
  // Backbone depth limit; 0 follows the backbone down to a leaf.
  int max_depth = 0;
};

void validate(const PruneConfig& config);

// Per-node raw scores aligned with that node's candidate-set entries; empty
// for nodes that were never expanded.
using RawScores = std::vector<std::vector<double>>;

// Normalized edge scores indexed by the child's NodeId (shadow children
// included); NaN for the root.
struct EdgeScores {
  std::vector<double> value;

  double operator[](NodeId id) const {
    return value.at(static_cast<std::size_t>(id));
  }
};

// Source of raw branch scores for a flattened tree.
class BranchScorer {
 public:
  virtual ~BranchScorer() = default;
  virtual RawScores raw_scores(std::span<const TokenId> context,
                               const TokenTree& tree,
                               const VerificationLayout& layout) const = 0;
};

// Early-exit predictor over the layered target's hidden states at the
// predictor's layer, computed once for the whole verification batch.
class PredictorScorer final : public BranchScorer {
 public:
  PredictorScorer(const LayeredTargetModel& model,
                  const EarlyExitPredictor& predictor);

  RawScores raw_scores(std::span<const TokenId> context, const TokenTree& tree,
                       const VerificationLayout& layout) const override;

 private:
  const LayeredTargetModel& model_;
  const EarlyExitPredictor& predictor_;
};

// Log draft probability. Used for targets without intermediate layers.
class DraftProbabilityScorer final : public BranchScorer {
 public:
  RawScores raw_scores(std::span<const TokenId> context, const TokenTree& tree,
                       const VerificationLayout& layout) const override;
};

RawScores predictor_raw_scores(const EarlyExitPredictor& predictor,
                               const Matrix& hidden_rows, const TokenTree& tree,
                               const VerificationLayout& layout);

// For every parent, softmax at temperature tau_e over its whole candidate
// set; shadow tokens sit in the denominator. Throws ContractError for a
// parent with children but no candidate set.
EdgeScores normalize_scores(const TokenTree& tree, const RawScores& raw,
                            double tau_e);

EdgeScores normalize_scores(const EarlyExitPredictor& predictor,
                            const Matrix& hidden_rows, const TokenTree& tree,
                            const VerificationLayout& layout, double tau_e);

// Root-first chain taking the best-scored verifiable child at each depth
// (ties: higher reach, then smaller token).
std::vector<NodeId> backbone_path(const TokenTree& tree,
                                  const EdgeScores& scores, int max_depth = 0);

struct PruneDecision {
  std::vector<NodeId> keep;  // ascending handles of the original tree
  bool rejected = false;
  std::vector<NodeId> backbone;
  EdgeScores scores;
};

struct PruneOutcome {
  PruneDecision decision;
  CompactResult compacted;
};

// keep = root + backbone + best root_keep depth-1 children + every edge with
// score >= theta, closed under ancestors. A decision that keeps fewer than
// min_keep_frac * |T| rows or fewer than min_leaves leaves is rejected and
// the full tree is kept. Shadows never survive.
PruneOutcome prune(const TokenTree& tree, const EdgeScores& scores,
                   const PruneConfig& config);

}  // namespace flashspec
