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

#include "flashspec/verification.hpp"

#include <algorithm>

#include "flashspec/error.hpp"

namespace flashspec {

VerificationResult verify_tree(const ProbModel& target,
                               std::span<const TokenId> context,
                               const TokenTree& tree) {
  if (context.empty()) throw ContractError("verify_tree: empty context");
  VerificationResult out;
  out.layout = flatten(tree);
  const VerificationLayout& layout = out.layout;

  // Batched pass: one target row per flattened node.
  out.per_row_argmax.reserve(layout.size());
  for (NodeId id : layout.rows) {
    out.per_row_argmax.push_back(static_cast<TokenId>(
        argmax(target.next_dist(node_prefix(context, tree, id)))));
  }

  std::vector<int> row_of(tree.size(), -1);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    row_of[static_cast<std::size_t>(layout.rows[i])] = static_cast<int>(i);
  }

  NodeId cur = kRootNode;
  out.accepted_path.push_back(cur);
  while (true) {
    const TokenId want =
        out.per_row_argmax[static_cast<std::size_t>(row_of[static_cast<std::size_t>(cur)])];
    const auto child = tree.find_child(cur, want);
    if (!child) {
      out.fallback = want;
      break;
    }
    cur = *child;
    out.accepted_path.push_back(cur);
    out.emitted.push_back(want);
  }
  out.accepted_len = static_cast<int>(out.accepted_path.size()) - 1;
  out.emitted.push_back(out.fallback);
  return out;
}

DecodeResult run_decode(const ProbModel& target, const ProbModel& draft,
                        std::span<const TokenId> prompt, int horizon,
                        const DecodeOptions& options) {
  if (horizon < 1) throw ContractError("run_decode: horizon must be >= 1");
  if (prompt.empty()) throw ContractError("run_decode: empty prompt");
  if (target.vocab_size() != draft.vocab_size()) {
    throw ConfigError("draft and target vocabularies differ");
  }
  validate(options.draft);
  if (options.scorer) validate(options.prune);

  DecodeResult out;
  out.reliability = options.reliability;
  out.profile = options.profile;
  DraftLatencyAverage draft_latency(options.initial_draft_ms);

  std::vector<TokenId> context(prompt.begin(), prompt.end());
  const std::size_t stop = context.size() + static_cast<std::size_t>(horizon);

  BuildOptions greedy;
  greedy.config = options.draft;
  BuildOptions chain;
  chain.config.k = 1;
  chain.config.max_depth = options.chain_length;
  chain.config.max_nodes = options.chain_length;
  chain.config.b_min = 0.0;
  chain.config.stopping_rule = false;
  const LatencyProfile unpriced;

  for (int cycle = 0; context.size() < stop; ++cycle) {
    CycleRecord rec;
    rec.cycle = cycle;
    rec.reliability = out.reliability.r;

    BuildResult build{TokenTree(context.back()), {}, {}};
    switch (options.policy) {
      case TreePolicy::kAutoregressive:
        break;
      case TreePolicy::kChain:
        build = build_tree(context, draft, chain, ReliabilityState{}, unpriced,
                           draft_latency);
        break;
      case TreePolicy::kBalanced:
        build = build_balanced_tree(context, draft, options.balanced_branching,
                                    options.balanced_budget);
        break;
      case TreePolicy::kGreedy:
        build = build_tree(context, draft, greedy, out.reliability, out.profile,
                           draft_latency);
        break;
    }
    const TokenTree& full = build.tree;
    rec.shape = {full.node_count(), full.leaf_count()};
    rec.expansions = build.trace.expansions;
    rec.expansions_per_depth = build.trace.expansions_per_depth;
    rec.estimated_gain = build.estimate.gain;
    rec.estimated_cycle_ms = build.estimate.cycle_cost;

    std::optional<PruneOutcome> pruned;
    if (options.scorer && options.policy != TreePolicy::kAutoregressive) {
      const VerificationLayout layout = flatten(full);
      const RawScores raw = options.scorer->raw_scores(context, full, layout);
      pruned = prune(full, normalize_scores(full, raw, options.prune.tau_e),
                     options.prune);
      rec.pruning_applied = true;
      rec.prune_rejected = pruned->decision.rejected;
    }
    const TokenTree& verified = pruned ? pruned->compacted.tree : full;
    rec.verified_shape = {verified.node_count(), verified.leaf_count()};

    const VerificationResult result = verify_tree(target, context, verified);
    rec.accepted_len = result.accepted_len;
    rec.full_accepted_len =
        pruned ? verify_tree(target, context, full).accepted_len
               : result.accepted_len;

    const std::size_t room = stop - context.size();
    const std::size_t take = std::min(room, result.emitted.size());
    rec.emitted = static_cast<int>(take);
    context.insert(context.end(), result.emitted.begin(),
                   result.emitted.begin() + static_cast<std::ptrdiff_t>(take));

    if (!options.pin_reliability) {
      const auto& stop_cands =
          verified.node(result.accepted_path.back()).candidates;
      if (stop_cands) {
        out.reliability = update_reliability(
            out.reliability, stop_cands->contains(result.fallback));
      }
    }
    if (options.policy == TreePolicy::kGreedy) {
      if (options.measure_verify) {
        out.profile.record(rec.shape,
                           options.measure_verify(rec.shape, rec.verified_shape));
      }
      if (options.measure_draft && rec.expansions > 0) {
        draft_latency.push(options.measure_draft(rec.expansions_per_depth) /
                           rec.expansions);
      }
    }

    if (options.observer) {
      options.observer(CycleView{build, pruned ? &*pruned : nullptr, verified,
                                 result, rec});
    }
    out.cycles.push_back(std::move(rec));
  }
  out.tokens.assign(context.begin() + static_cast<std::ptrdiff_t>(prompt.size()),
                    context.end());
  return out;
}

}  // namespace flashspec
