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

#include "flashspec/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "flashspec/error.hpp"

namespace flashspec {

void validate(const PruneConfig& config) {
  if (!(config.theta > 0.0 && config.theta < 1.0)) {
    throw ConfigError("prune: theta must lie in (0, 1)");
  }
  if (!(config.tau_e > 0.0)) throw ConfigError("prune: tau_e must be > 0");
  if (config.root_keep < 0) throw ConfigError("prune: root_keep must be >= 0");
  if (!(config.min_keep_frac >= 0.0 && config.min_keep_frac <= 1.0)) {
    throw ConfigError("prune: min_keep_frac must lie in [0, 1]");
  }
  if (config.min_leaves < 0) throw ConfigError("prune: min_leaves must be >= 0");
}

PredictorScorer::PredictorScorer(const LayeredTargetModel& model,
                                 const EarlyExitPredictor& predictor)
    : model_(model), predictor_(predictor) {
  if (predictor.layer() >= model.num_layers()) {
    throw ConfigError("predictor layer must precede the final layer");
  }
  if (predictor.vocab_size() != model.vocab_size() ||
      predictor.hidden_dim() != model.hidden_dim()) {
    throw ConfigError("predictor shape does not match the target model");
  }
}

RawScores PredictorScorer::raw_scores(std::span<const TokenId> context,
                                      const TokenTree& tree,
                                      const VerificationLayout& layout) const {
  const Matrix hidden =
      hidden_states(model_, context, tree, layout, predictor_.layer());
  return predictor_raw_scores(predictor_, hidden, tree, layout);
}

RawScores DraftProbabilityScorer::raw_scores(
    std::span<const TokenId> /*context*/, const TokenTree& tree,
    const VerificationLayout& layout) const {
  RawScores raw(tree.size());
  for (NodeId id : layout.rows) {
    const auto& cands = tree.node(id).candidates;
    if (!cands) continue;
    auto& out = raw[static_cast<std::size_t>(id)];
    for (const Candidate& c : cands->entries()) {
      out.push_back(std::log(std::max(c.p_draft, 1e-300)));
    }
  }
  return raw;
}

RawScores predictor_raw_scores(const EarlyExitPredictor& predictor,
                               const Matrix& hidden_rows, const TokenTree& tree,
                               const VerificationLayout& layout) {
  if (hidden_rows.rows() != static_cast<int>(layout.size())) {
    throw ContractError("hidden rows do not match the layout");
  }
  RawScores raw(tree.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& cands = tree.node(layout.rows[i]).candidates;
    if (!cands) continue;
    auto& out = raw[static_cast<std::size_t>(layout.rows[i])];
    const auto h = hidden_rows.row(static_cast<int>(i));
    for (const Candidate& c : cands->entries()) {
      out.push_back(predictor.score(h, c.token));
    }
  }
  return raw;
}

EdgeScores normalize_scores(const TokenTree& tree, const RawScores& raw,
                            double tau_e) {
  if (!(tau_e > 0.0)) throw ContractError("tau_e must be > 0");
  if (raw.size() != tree.size()) throw ContractError("raw scores size mismatch");
  EdgeScores out{std::vector<double>(tree.size(),
                                     std::numeric_limits<double>::quiet_NaN())};
  for (std::size_t u = 0; u < tree.size(); ++u) {
    const TreeNode& parent = tree.node(static_cast<NodeId>(u));
    if (parent.children.empty()) continue;
    if (!parent.candidates || parent.candidates->empty()) {
      throw ContractError("parent " + std::to_string(u) +
                          " has children but no candidate set");
    }
    const auto entries = parent.candidates->entries();
    if (raw[u].size() != entries.size()) {
      throw ContractError("raw scores do not cover the candidate set");
    }
    const std::vector<double> norm = softmax(raw[u], tau_e);
    for (NodeId c : parent.children) {
      const TokenId token = tree.node(c).token;
      auto it = std::find_if(entries.begin(), entries.end(),
                             [token](const Candidate& x) { return x.token == token; });
      if (it == entries.end()) {
        throw ContractError("child token missing from its parent's candidates");
      }
      out.value[static_cast<std::size_t>(c)] =
          norm[static_cast<std::size_t>(it - entries.begin())];
    }
  }
  return out;
}

EdgeScores normalize_scores(const EarlyExitPredictor& predictor,
                            const Matrix& hidden_rows, const TokenTree& tree,
                            const VerificationLayout& layout, double tau_e) {
  return normalize_scores(
      tree, predictor_raw_scores(predictor, hidden_rows, tree, layout), tau_e);
}

namespace {

// Ordering for "most reliable child": score, then reach, then smaller token.
bool more_reliable(const TokenTree& tree, const EdgeScores& scores, NodeId a,
                   NodeId b) {
  if (scores[a] != scores[b]) return scores[a] > scores[b];
  const TreeNode& na = tree.node(a);
  const TreeNode& nb = tree.node(b);
  if (na.reach != nb.reach) return na.reach > nb.reach;
  return na.token < nb.token;
}

std::vector<NodeId> live_children(const TokenTree& tree, NodeId u) {
  std::vector<NodeId> out;
  for (NodeId c : tree.node(u).children) {
    if (!tree.node(c).shadow) out.push_back(c);
  }
  return out;
}

}  // namespace

std::vector<NodeId> backbone_path(const TokenTree& tree,
                                  const EdgeScores& scores, int max_depth) {
  std::vector<NodeId> path{kRootNode};
  NodeId cur = kRootNode;
  while (max_depth <= 0 || tree.node(cur).depth < max_depth) {
    const auto kids = live_children(tree, cur);
    if (kids.empty()) break;
    NodeId best = kids.front();
    for (NodeId c : kids) {
      if (more_reliable(tree, scores, c, best)) best = c;
    }
    path.push_back(best);
    cur = best;
  }
  return path;
}

PruneOutcome prune(const TokenTree& tree, const EdgeScores& scores,
                   const PruneConfig& config) {
  validate(config);
  if (scores.value.size() != tree.size()) {
    throw ContractError("edge scores do not match the tree");
  }
  const std::size_t n = tree.size();
  std::vector<bool> keep(n, false);
  keep[kRootNode] = true;

  PruneDecision decision;
  decision.scores = scores;
  decision.backbone = backbone_path(tree, scores, config.max_depth);
  for (NodeId id : decision.backbone) keep[static_cast<std::size_t>(id)] = true;

  auto root_kids = live_children(tree, kRootNode);
  std::sort(root_kids.begin(), root_kids.end(), [&](NodeId a, NodeId b) {
    return more_reliable(tree, scores, a, b);
  });
  for (std::size_t i = 0;
       i < root_kids.size() && i < static_cast<std::size_t>(config.root_keep); ++i) {
    keep[static_cast<std::size_t>(root_kids[i])] = true;
  }

  for (std::size_t i = 1; i < n; ++i) {
    const TreeNode& node = tree.node(static_cast<NodeId>(i));
    if (!node.shadow && scores.value[i] >= config.theta) keep[i] = true;
  }
  // Ancestor closure; children always have larger handles than parents.
  for (std::size_t i = n; i-- > 1;) {
    if (keep[i]) keep[static_cast<std::size_t>(tree.node(static_cast<NodeId>(i)).parent)] = true;
  }

  int kept_rows = 0;
  int kept_leaves = 0;
  bool pruned_any = false;
  for (std::size_t i = 0; i < n; ++i) {
    const TreeNode& node = tree.node(static_cast<NodeId>(i));
    if (node.shadow) continue;
    if (!keep[i]) {
      pruned_any = true;
      continue;
    }
    ++kept_rows;
    const bool has_kept_child = std::any_of(
        node.children.begin(), node.children.end(), [&](NodeId c) {
          return !tree.node(c).shadow && keep[static_cast<std::size_t>(c)];
        });
    if (!has_kept_child) ++kept_leaves;
  }

  if (pruned_any &&
      (kept_rows < config.min_keep_frac * tree.node_count() ||
       kept_leaves < config.min_leaves)) {
    decision.rejected = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const bool shadow = tree.node(static_cast<NodeId>(i)).shadow;
    if (!shadow && (keep[i] || decision.rejected)) {
      decision.keep.push_back(static_cast<NodeId>(i));
    }
  }
  CompactResult compacted = compact(tree, decision.keep);
  return {std::move(decision), std::move(compacted)};
}

}  // namespace flashspec
