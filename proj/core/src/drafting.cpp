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

#include "flashspec/drafting.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <string>

#include "flashspec/error.hpp"

namespace flashspec {

double calibrate(double p_draft, const CandidateSet& /*candidates*/,
                 const ReliabilityState& reliability) {
  return std::clamp(reliability.r * p_draft, 0.0, 1.0);
}

ReliabilityState update_reliability(ReliabilityState state, bool hit) {
  const double next =
      state.beta * state.r + (1.0 - state.beta) * (hit ? 1.0 : 0.0);
  state.r = std::clamp(next, state.r_min, 1.0);
  return state;
}

LatencyProfile::LatencyProfile(double penalty) : penalty_(penalty) {
  if (!(penalty_ >= 1.0)) throw ConfigError("profile penalty must be >= 1");
}

void LatencyProfile::seed(TreeShape shape, double ms) {
  if (shape.nodes < 1 || shape.leaves < 1) {
    throw ContractError("profile shape components must be >= 1");
  }
  if (!(ms > 0.0)) throw ContractError("profile latency must be positive");
  entries_[shape] = Entry{ms, 1};
}

void LatencyProfile::record(TreeShape shape, double ms) {
  if (shape.nodes < 1 || shape.leaves < 1) {
    throw ContractError("profile shape components must be >= 1");
  }
  if (!(ms > 0.0)) throw ContractError("profile latency must be positive");
  Entry& e = entries_[shape];
  e.count += 1;
  e.ms += (ms - e.ms) / static_cast<double>(e.count);
}

double LatencyProfile::lookup(TreeShape shape) const {
  if (shape.nodes < 1 || shape.leaves < 1) {
    throw ContractError("profile shape components must be >= 1");
  }
  if (entries_.empty()) {
    throw ConfigError("latency profile is empty and has no offline seed");
  }
  if (auto it = entries_.find(shape); it != entries_.end()) return it->second.ms;
  // Map order is (nodes, leaves) ascending, so keeping the first strict
  // minimum resolves ties toward the smaller shape.
  long best_dist = std::numeric_limits<long>::max();
  double best_ms = 0.0;
  for (const auto& [s, e] : entries_) {
    const long dist = std::labs(static_cast<long>(s.nodes) - shape.nodes) +
                      std::labs(static_cast<long>(s.leaves) - shape.leaves);
    if (dist < best_dist) {
      best_dist = dist;
      best_ms = e.ms;
    }
  }
  return best_ms * penalty_;
}

std::map<TreeShape, double> LatencyProfile::entries() const {
  std::map<TreeShape, double> out;
  for (const auto& [s, e] : entries_) out.emplace(s, e.ms);
  return out;
}

nlohmann::json LatencyProfile::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [s, e] : entries_) rows.push_back({s.nodes, s.leaves, e.ms});
  return {{"penalty", penalty_}, {"entries", std::move(rows)}};
}

LatencyProfile LatencyProfile::from_json(const nlohmann::json& doc) {
  LatencyProfile profile(doc.value("penalty", 1.1));
  for (const auto& row : doc.at("entries")) {
    if (!row.is_array() || row.size() != 3) {
      throw ConfigError("profile entries must be [nodes, leaves, ms] triples");
    }
    profile.seed({row[0].get<int>(), row[1].get<int>()}, row[2].get<double>());
  }
  return profile;
}

void LatencyProfile::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write profile " + path.string());
  out << to_json().dump(2) << '\n';
}

LatencyProfile LatencyProfile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read profile " + path.string());
  return from_json(nlohmann::json::parse(in));
}

double estimate_verify_cost(const LatencyProfile& profile, TreeShape shape) {
  return profile.lookup(shape);
}

DraftLatencyAverage::DraftLatencyAverage(double initial_ms, std::size_t window)
    : initial_(initial_ms), window_(window) {
  if (window_ == 0) throw ConfigError("moving-average window must be >= 1");
  if (!(initial_ >= 0.0)) throw ConfigError("initial draft latency must be >= 0");
}

void DraftLatencyAverage::push(double ms) {
  samples_.push_back(ms);
  sum_ += ms;
  if (samples_.size() > window_) {
    sum_ -= samples_.front();
    samples_.pop_front();
  }
}

double DraftLatencyAverage::value() const {
  if (samples_.empty()) return initial_;
  return sum_ / static_cast<double>(samples_.size());
}

void validate(const DraftConfig& config) {
  if (config.k < 1) throw ConfigError("drafting: k must be >= 1");
  if (config.max_depth < 1) throw ConfigError("drafting: max_depth must be >= 1");
  if (!(config.b_min >= 0.0 && config.b_min < 1.0)) {
    throw ConfigError("drafting: b_min must lie in [0, 1)");
  }
  if (config.max_nodes < 0) throw ConfigError("drafting: max_nodes must be >= 0");
  if (!(config.cost_floor_ms > 0.0)) {
    throw ConfigError("drafting: cost floor must be positive");
  }
}

bool expandable(int depth, double reach, const DraftConfig& config) {
  return depth < config.max_depth && reach >= config.b_min;
}

double estimate_gain(const TokenTree& tree) {
  double gain = 1.0;
  for (std::size_t i = 1; i < tree.size(); ++i) {
    const TreeNode& n = tree.node(static_cast<NodeId>(i));
    if (!n.shadow) gain += n.reach;
  }
  return gain;
}

TreeShape shape_after_insert(const TokenTree& tree, NodeId parent) {
  return {tree.node_count() + 1,
          tree.leaf_count() + (tree.is_leaf(parent) ? 0 : 1)};
}

namespace {

double marginal_from(double verify_before, double verify_after, int depth,
                     double reach, double draft_ms, const DraftConfig& config) {
  const double draft = expandable(depth, reach, config) ? draft_ms : 0.0;
  return std::max(verify_after - verify_before + draft, config.cost_floor_ms);
}

// Selection order for the greedy step: larger ratio, then larger reach, then
// smaller token, then smaller parent handle.
bool better(double ratio, const FrontierEntry& e, double best_ratio,
            const FrontierEntry& best) {
  if (ratio != best_ratio) return ratio > best_ratio;
  if (e.reach != best.reach) return e.reach > best.reach;
  if (e.token != best.token) return e.token < best.token;
  return e.parent < best.parent;
}

TreeShape shape_of(const TokenTree& tree) {
  return {tree.node_count(), tree.leaf_count()};
}

void count_expansion(BuildTrace& trace, int depth) {
  ++trace.expansions;
  if (trace.expansions_per_depth.size() <= static_cast<std::size_t>(depth)) {
    trace.expansions_per_depth.resize(static_cast<std::size_t>(depth) + 1, 0);
  }
  ++trace.expansions_per_depth[static_cast<std::size_t>(depth)];
}

void shadow_remaining(TokenTree& tree, const Frontier& frontier) {
  for (const FrontierEntry& e : frontier.entries()) {
    tree.add_shadow(e.parent, e.token, e.reach);
  }
}

}  // namespace

double marginal_cost(const TokenTree& tree, const FrontierEntry& entry,
                     const LatencyProfile& profile, double draft_ms_estimate,
                     const DraftConfig& config) {
  const double before = profile.lookup(shape_of(tree));
  const double after = profile.lookup(shape_after_insert(tree, entry.parent));
  return marginal_from(before, after, tree.node(entry.parent).depth + 1,
                       entry.reach, draft_ms_estimate, config);
}

BuildResult build_tree(std::span<const TokenId> context, const ProbModel& draft,
                       const BuildOptions& options,
                       const ReliabilityState& reliability,
                       const LatencyProfile& profile,
                       const DraftLatencyAverage& draft_latency) {
  if (context.empty()) throw ContractError("build_tree: empty context");
  const DraftConfig& cfg = options.config;
  validate(cfg);

  BuildResult out{TokenTree(context.back()), {}, {}};
  TokenTree& tree = out.tree;
  BuildTrace& trace = out.trace;
  Frontier frontier;
  double gain = 1.0;
  double draft_cost = 0.0;
  const double draft_ms = draft_latency.value();
  // Without the stopping rule an empty profile prices every shape at zero.
  const bool unpriced = profile.empty() && !cfg.stopping_rule;
  auto price = [&](TreeShape s) { return unpriced ? 0.0 : profile.lookup(s); };

  auto add_frontier = [&](NodeId u) {
    const CandidateSet cands =
        draft_candidates(draft, node_prefix(context, tree, u), cfg.k);
    const double parent_reach = tree.node(u).reach;
    for (const Candidate& c : cands.entries()) {
      frontier.push({u, c.token, c.p_draft,
                     parent_reach * calibrate(c.p_draft, cands, reliability)});
    }
    tree.set_candidates(u, cands);
    count_expansion(trace, tree.node(u).depth);
    return draft_ms;
  };

  draft_cost += add_frontier(kRootNode);

  while (true) {
    if (frontier.empty()) {
      trace.exit = BuildExit::kFrontierEmpty;
      break;
    }
    if (cfg.max_nodes > 0 && tree.node_count() - 1 >= cfg.max_nodes) {
      trace.exit = BuildExit::kNodeBudget;
      break;
    }

    const TreeShape shape = shape_of(tree);
    const double verify_before = price(shape);
    const double cycle_cost = draft_cost + verify_before;
    // Only two post-insert shapes exist: under a leaf or under an inner node.
    const double after_leaf = price({shape.nodes + 1, shape.leaves});
    const double after_inner = price({shape.nodes + 1, shape.leaves + 1});

    std::size_t best = 0;
    double best_ratio = -1.0;
    double best_marginal = 0.0;
    const auto entries = frontier.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const FrontierEntry& e = entries[i];
      const double dc = marginal_from(
          verify_before, tree.is_leaf(e.parent) ? after_leaf : after_inner,
          tree.node(e.parent).depth + 1, e.reach, draft_ms, cfg);
      const double ratio = e.reach / dc;
      if (i == 0 || better(ratio, e, best_ratio, entries[best])) {
        best = i;
        best_ratio = ratio;
        best_marginal = dc;
      }
    }

    const double average_rate = gain / cycle_cost;
    if (cfg.stopping_rule && best_ratio <= average_rate) {
      trace.exit = BuildExit::kStoppingRule;
      trace.exit_best_ratio = best_ratio;
      trace.exit_average_rate = average_rate;
      break;
    }

    BuildStep step;
    step.chosen = entries[best];
    step.ratio = best_ratio;
    step.marginal = best_marginal;
    step.gain_before = gain;
    step.cycle_cost_before = cycle_cost;
    if (options.record_frontier) {
      step.frontier.assign(entries.begin(), entries.end());
    }

    const NodeId v = insert_node(tree, frontier, best);
    step.inserted = v;
    gain += tree.node(v).reach;
    if (expandable(tree.node(v).depth, tree.node(v).reach, cfg)) {
      draft_cost += add_frontier(v);
      step.expanded = true;
    }
    trace.steps.push_back(std::move(step));
  }

  shadow_remaining(tree, frontier);
  out.estimate.gain = gain;
  out.estimate.draft_cost = draft_cost;
  out.estimate.verify_cost = price(shape_of(tree));
  out.estimate.cycle_cost = out.estimate.draft_cost + out.estimate.verify_cost;
  return out;
}

BuildResult build_balanced_tree(std::span<const TokenId> context,
                                const ProbModel& draft, int branching,
                                int budget) {
  if (context.empty()) throw ContractError("build_tree: empty context");
  if (branching < 1) throw ConfigError("balanced tree: branching must be >= 1");
  if (budget < 1) throw ConfigError("balanced tree: budget must be >= 1");

  BuildResult out{TokenTree(context.back()), {}, {}};
  TokenTree& tree = out.tree;
  const ReliabilityState unit{};
  Frontier leftovers;
  std::deque<NodeId> queue{kRootNode};
  while (!queue.empty() && tree.node_count() < budget) {
    const NodeId u = queue.front();
    queue.pop_front();
    const CandidateSet cands =
        draft_candidates(draft, node_prefix(context, tree, u), branching);
    tree.set_candidates(u, cands);
    count_expansion(out.trace, tree.node(u).depth);
    const double parent_reach = tree.node(u).reach;
    for (const Candidate& c : cands.entries()) {
      const double reach = parent_reach * calibrate(c.p_draft, cands, unit);
      if (tree.node_count() < budget) {
        queue.push_back(tree.insert(u, c.token, reach));
      } else {
        leftovers.push({u, c.token, c.p_draft, reach});
      }
    }
  }
  shadow_remaining(tree, leftovers);
  out.trace.exit = BuildExit::kNodeBudget;
  out.estimate.gain = estimate_gain(tree);
  out.estimate.cycle_cost = 0.0;
  return out;
}

}  // namespace flashspec
