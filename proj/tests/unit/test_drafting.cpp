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

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "flashspec/drafting.hpp"
#include "flashspec/error.hpp"
#include "test_support.hpp"

namespace flashspec {
namespace {

LatencyProfile affine_profile(int max_nodes, double base, double per_node,
                              double per_leaf) {
  LatencyProfile p;
  for (int n = 1; n <= max_nodes; ++n) {
    for (int l = 1; l <= n; ++l) p.seed({n, l}, base + per_node * n + per_leaf * l);
  }
  return p;
}

TEST(Reliability, CalibrateScalesAndClamps) {
  const CandidateSet c({{1, 0.6}, {2, 0.3}});
  EXPECT_DOUBLE_EQ(calibrate(0.6, c, {0.5}), 0.3);
  EXPECT_DOUBLE_EQ(calibrate(1.0, c, {1.0}), 1.0);
  EXPECT_DOUBLE_EQ(calibrate(0.0, c, {0.7}), 0.0);
  // Order preserved inside the set.
  EXPECT_GT(calibrate(0.6, c, {0.2}), calibrate(0.3, c, {0.2}));
}

TEST(Reliability, EmaUpdates) {
  EXPECT_DOUBLE_EQ(update_reliability({0.5}, true).r, 0.55);
  EXPECT_DOUBLE_EQ(update_reliability({1.0}, false).r, 0.9);
  ReliabilityState s{0.06, 0.9, 0.05};
  s = update_reliability(s, false);
  EXPECT_DOUBLE_EQ(s.r, 0.054);
  s = update_reliability(s, false);
  EXPECT_DOUBLE_EQ(s.r, 0.05);
  EXPECT_DOUBLE_EQ(update_reliability({1.0}, true).r, 1.0);
}

TEST(Gain, RootOnlyAndShadowsExcluded) {
  TokenTree t(3);
  EXPECT_DOUBLE_EQ(estimate_gain(t), 1.0);
  const NodeId a = t.insert(kRootNode, 1, 0.5);
  t.insert(a, 2, 0.4);
  t.add_shadow(kRootNode, 5, 0.3);
  EXPECT_DOUBLE_EQ(estimate_gain(t), 1.9);
}

TEST(Gain, MatchesRecursiveSum) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    TokenTree t(0);
    double expected = 1.0;
    for (int i = 0; i < 30; ++i) {
      const NodeId parent = static_cast<NodeId>(rng() % t.size());
      if (t.node(parent).shadow) continue;
      const double reach = t.node(parent).reach * u(rng);
      const TokenId tok = static_cast<TokenId>(100 + i);
      if (u(rng) < 0.2) {
        t.add_shadow(parent, tok, reach);
      } else {
        t.insert(parent, tok, reach);
        expected += reach;
      }
    }
    EXPECT_NEAR(estimate_gain(t), expected, 1e-12);
  }
}

TEST(Profile, ExactHitAndNearestMiss) {
  LatencyProfile p;
  p.seed({8, 3}, 900.0);
  EXPECT_DOUBLE_EQ(p.lookup({8, 3}), 900.0);
  EXPECT_DOUBLE_EQ(p.lookup({9, 3}), 990.0);
  EXPECT_THROW(p.lookup({0, 1}), ContractError);
  EXPECT_THROW(LatencyProfile().lookup({1, 1}), ConfigError);
  EXPECT_THROW(LatencyProfile(0.9), ConfigError);
}

TEST(Profile, TiesPreferSmallerShape) {
  LatencyProfile p(1.0);
  p.seed({4, 2}, 40.0);
  p.seed({6, 2}, 60.0);
  p.seed({5, 1}, 50.0);
  p.seed({5, 3}, 70.0);
  EXPECT_DOUBLE_EQ(p.lookup({5, 2}), 40.0);
}

TEST(Profile, NearestNeighbourMatchesScan) {
  std::mt19937_64 rng(11);
  LatencyProfile p(1.25);
  std::vector<std::pair<TreeShape, double>> stored;
  for (int i = 0; i < 40; ++i) {
    const int n = 1 + static_cast<int>(rng() % 40);
    const int l = 1 + static_cast<int>(rng() % static_cast<unsigned>(n));
    const double ms = 10.0 + static_cast<double>(rng() % 1000);
    p.seed({n, l}, ms);
  }
  for (const auto& [s, ms] : p.entries()) stored.emplace_back(s, ms);
  for (int q = 0; q < 500; ++q) {
    const TreeShape shape{1 + static_cast<int>(rng() % 50),
                          1 + static_cast<int>(rng() % 50)};
    double expected = 0.0;
    long best = std::numeric_limits<long>::max();
    bool exact = false;
    for (const auto& [s, ms] : stored) {
      const long d = std::labs(s.nodes - shape.nodes) + std::labs(s.leaves - shape.leaves);
      if (d < best) {
        best = d;
        expected = ms;
      }
      if (d == 0) exact = true;
    }
    EXPECT_DOUBLE_EQ(p.lookup(shape), exact ? expected : expected * 1.25);
  }
}

TEST(Profile, RecordKeepsRunningMean) {
  LatencyProfile p;
  p.seed({2, 1}, 10.0);
  p.record({2, 1}, 20.0);
  EXPECT_DOUBLE_EQ(p.lookup({2, 1}), 15.0);
  p.record({3, 2}, 7.0);
  EXPECT_DOUBLE_EQ(p.lookup({3, 2}), 7.0);
  p.seed({2, 1}, 4.0);
  EXPECT_DOUBLE_EQ(p.lookup({2, 1}), 4.0);
}

TEST(Profile, JsonRoundTrip) {
  const LatencyProfile p = affine_profile(6, 100.0, 3.0, 1.5);
  const LatencyProfile q = LatencyProfile::from_json(p.to_json());
  EXPECT_EQ(p.entries(), q.entries());
  EXPECT_EQ(p.penalty(), q.penalty());
  EXPECT_EQ(p.to_json(), q.to_json());
  EXPECT_THROW(LatencyProfile::from_json({{"entries", {{1, 2}}}}), ConfigError);
}

TEST(DraftAverage, Window) {
  DraftLatencyAverage avg(5.0, 2);
  EXPECT_DOUBLE_EQ(avg.value(), 5.0);
  avg.push(1.0);
  avg.push(3.0);
  EXPECT_DOUBLE_EQ(avg.value(), 2.0);
  avg.push(5.0);
  EXPECT_DOUBLE_EQ(avg.value(), 4.0);
  EXPECT_THROW(DraftLatencyAverage(1.0, 0), ConfigError);
}

TEST(Expandable, DepthAndReach) {
  DraftConfig c;
  c.max_depth = 3;
  c.b_min = 0.1;
  EXPECT_TRUE(expandable(2, 0.1, c));
  EXPECT_FALSE(expandable(3, 0.9, c));
  EXPECT_FALSE(expandable(1, 0.05, c));
}

TEST(MarginalCost, VerifyDeltaPlusDraft) {
  const LatencyProfile p = affine_profile(8, 100.0, 10.0, 5.0);
  DraftConfig c;
  TokenTree t(0);
  const NodeId a = t.insert(kRootNode, 1, 0.6);
  // Under a leaf: one more node, same leaf count.
  EXPECT_DOUBLE_EQ(marginal_cost(t, {a, 2, 0.5, 0.3}, p, 7.0, c), 17.0);
  // Under the root (inner): one more node and one more leaf.
  EXPECT_DOUBLE_EQ(marginal_cost(t, {kRootNode, 3, 0.2, 0.2}, p, 7.0, c), 22.0);
  // Not expandable: no draft term.
  c.b_min = 0.5;
  EXPECT_DOUBLE_EQ(marginal_cost(t, {kRootNode, 3, 0.2, 0.2}, p, 7.0, c), 15.0);
  // Floor.
  const LatencyProfile flat = affine_profile(8, 100.0, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(marginal_cost(t, {kRootNode, 3, 0.2, 0.2}, flat, 0.0, c), 0.01);
  EXPECT_EQ(shape_after_insert(t, a), (TreeShape{3, 1}));
  EXPECT_EQ(shape_after_insert(t, kRootNode), (TreeShape{3, 2}));
}

TEST(BuildTree, StopsImmediatelyWhenDraftingCannotPay) {
  const ScriptedModel draft(4, {}, {0.7, 0.1, 0.1, 0.1});
  LatencyProfile flat;
  flat.seed({1, 1}, 1.0);
  BuildOptions opt;
  const std::vector<TokenId> ctx{2};
  // Best ratio 0.7 / 10 against 1 / (10 + 1): the first insertion loses.
  const auto res = build_tree(ctx, draft, opt, {}, flat, DraftLatencyAverage(10.0));
  EXPECT_EQ(res.trace.exit, BuildExit::kStoppingRule);
  EXPECT_EQ(res.tree.node_count(), 1);
  EXPECT_TRUE(res.trace.steps.empty());
  EXPECT_LE(res.trace.exit_best_ratio, res.trace.exit_average_rate);
}

TEST(BuildTree, ChainStopsAtClosedFormDepth) {
  const double q = 0.8, delta = 10.0, verify = 100.0;
  const ScriptedModel draft(2, {}, {q, 1.0 - q});
  LatencyProfile flat = affine_profile(40, verify, 0.0, 0.0);
  BuildOptions opt;
  opt.config.k = 1;
  opt.config.max_depth = 30;
  opt.config.b_min = 0.0;
  const std::vector<TokenId> ctx{1};
  const auto res = build_tree(ctx, draft, opt, {}, flat, DraftLatencyAverage(delta));

  // First d at which q^(d+1) ((d+1) delta + V) <= delta (1 + q (1 - q^d)/(1 - q)).
  int expected = 0;
  while (std::pow(q, expected + 1) * ((expected + 1) * delta + verify) >
         delta * (1.0 + q * (1.0 - std::pow(q, expected)) / (1.0 - q))) {
    ++expected;
  }
  EXPECT_EQ(expected, 6);
  EXPECT_EQ(res.trace.exit, BuildExit::kStoppingRule);
  EXPECT_EQ(res.tree.node_count() - 1, expected);
  EXPECT_EQ(res.tree.leaf_count(), 1);
  EXPECT_NEAR(res.estimate.gain,
              1.0 + q * (1.0 - std::pow(q, expected)) / (1.0 - q), 1e-12);
}

TEST(BuildTree, NodeBudget) {
  const TabularMarkovModel draft({16, 1, 1.0, 3});
  BuildOptions opt;
  opt.config.max_nodes = 3;
  opt.config.stopping_rule = false;
  const std::vector<TokenId> ctx{4};
  const auto res = build_tree(ctx, draft, opt, {}, LatencyProfile(),
                              DraftLatencyAverage(1.0));
  EXPECT_EQ(res.trace.exit, BuildExit::kNodeBudget);
  EXPECT_EQ(res.tree.node_count(), 4);
}

TEST(BuildTree, ReplayConfirmsGreedyChoices) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const TabularMarkovModel draft({16, 2, 2.0, seed});
    const LatencyProfile prof = affine_profile(64, 300.0, 4.0 + seed % 5, 2.0);
    BuildOptions opt;
    opt.record_frontier = true;
    const std::vector<TokenId> ctx{3, 5};
    const ReliabilityState rel{0.8};
    const DraftLatencyAverage dl(6.0);
    const auto res = build_tree(ctx, draft, opt, rel, prof, dl);
    ASSERT_FALSE(res.trace.steps.empty());

    TokenTree replay(ctx.back());
    for (const BuildStep& step : res.trace.steps) {
      double best = -1.0;
      for (const FrontierEntry& e : step.frontier) {
        best = std::max(best, e.reach / marginal_cost(replay, e, prof, dl.value(), opt.config));
      }
      const double chosen =
          step.chosen.reach / marginal_cost(replay, step.chosen, prof, dl.value(), opt.config);
      EXPECT_DOUBLE_EQ(chosen, best);
      EXPECT_DOUBLE_EQ(chosen, step.ratio);
      EXPECT_GT(step.ratio, step.gain_before / step.cycle_cost_before);
      EXPECT_EQ(replay.insert(step.chosen.parent, step.chosen.token, step.chosen.reach),
                step.inserted);
    }
    if (res.trace.exit == BuildExit::kStoppingRule) {
      EXPECT_LE(res.trace.exit_best_ratio, res.trace.exit_average_rate);
    }
    // Leftover candidates become shadows; every expanded node has candidates.
    int expanded = 0;
    for (std::size_t i = 0; i < res.tree.size(); ++i) {
      expanded += res.tree.node(static_cast<NodeId>(i)).candidates.has_value();
    }
    EXPECT_EQ(expanded, res.trace.expansions);
  }
}

TEST(BuildTree, DeterministicAndValidated) {
  const TabularMarkovModel draft({16, 2, 2.0, 8});
  const LatencyProfile prof = affine_profile(64, 300.0, 5.0, 2.0);
  BuildOptions opt;
  const std::vector<TokenId> ctx{1, 2};
  const auto a = build_tree(ctx, draft, opt, {}, prof, DraftLatencyAverage(5.0));
  const auto b = build_tree(ctx, draft, opt, {}, prof, DraftLatencyAverage(5.0));
  EXPECT_EQ(tree_to_json(a.tree), tree_to_json(b.tree));
  opt.config.k = 0;
  EXPECT_THROW(build_tree(ctx, draft, opt, {}, prof, DraftLatencyAverage(5.0)), ConfigError);
  EXPECT_THROW(build_tree({}, draft, BuildOptions{}, {}, prof, DraftLatencyAverage(5.0)),
               ContractError);
}

TEST(BalancedTree, BreadthFirstFill) {
  const TabularMarkovModel draft({16, 1, 2.0, 4});
  const std::vector<TokenId> ctx{7};
  const auto res = build_balanced_tree(ctx, draft, 2, 16);
  EXPECT_EQ(res.tree.node_count(), 16);
  // 1 + 2 + 4 + 8 = 15 rows, then one child of the first depth-3 node.
  int max_depth = 0;
  for (std::size_t i = 0; i < res.tree.size(); ++i) {
    const auto& n = res.tree.node(static_cast<NodeId>(i));
    if (!n.shadow) max_depth = std::max(max_depth, n.depth);
  }
  EXPECT_EQ(max_depth, 4);
  EXPECT_EQ(res.tree.leaf_count(), 8);
}

}  // namespace
}  // namespace flashspec
