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
#include <random>

#include <gtest/gtest.h>

#include "flashspec/error.hpp"
#include "flashspec/pruning.hpp"

namespace flashspec {
namespace {

RawScores raw_for(const TokenTree& tree) { return RawScores(tree.size()); }

TEST(NormalizeScores, SoftmaxOverCandidateSet) {
  TokenTree t(0);
  t.set_candidates(kRootNode, CandidateSet({{1, 0.6}, {2, 0.4}}));
  const NodeId a = t.insert(kRootNode, 1, 0.6);
  const NodeId b = t.insert(kRootNode, 2, 0.4);
  RawScores raw = raw_for(t);
  raw[kRootNode] = {2.0, 1.0};
  const EdgeScores s = normalize_scores(t, raw, 1.0);
  EXPECT_NEAR(s[a], 0.7310585786, 1e-9);
  EXPECT_NEAR(s[b], 0.2689414214, 1e-9);
  EXPECT_TRUE(std::isnan(s[kRootNode]));
}

TEST(NormalizeScores, ShadowsShareTheDenominator) {
  TokenTree t(0);
  t.set_candidates(kRootNode, CandidateSet({{1, 0.5}, {2, 0.5}}));
  const NodeId a = t.insert(kRootNode, 1, 0.5);
  const NodeId s = t.add_shadow(kRootNode, 2, 0.5);
  RawScores raw = raw_for(t);
  raw[kRootNode] = {0.3, 0.3};
  const EdgeScores e = normalize_scores(t, raw, 1.0);
  EXPECT_DOUBLE_EQ(e[a], 0.5);
  EXPECT_DOUBLE_EQ(e[s], 0.5);
}

TEST(NormalizeScores, HighTemperatureFlattens) {
  TokenTree t(0);
  t.set_candidates(kRootNode, CandidateSet({{1, 0.9}, {2, 0.1}}));
  const NodeId a = t.insert(kRootNode, 1, 0.9);
  t.insert(kRootNode, 2, 0.1);
  RawScores raw = raw_for(t);
  raw[kRootNode] = {5.0, -5.0};
  EXPECT_NEAR(normalize_scores(t, raw, 1e6)[a], 0.5, 1e-5);
}

TEST(NormalizeScores, Errors) {
  TokenTree t(0);
  t.insert(kRootNode, 1, 0.5);
  EXPECT_THROW(normalize_scores(t, raw_for(t), 1.0), ContractError);
  t.set_candidates(kRootNode, CandidateSet({{1, 0.5}}));
  EXPECT_THROW(normalize_scores(t, raw_for(t), 1.0), ContractError);
  EXPECT_THROW(normalize_scores(t, RawScores(1), 1.0), ContractError);
  RawScores raw = raw_for(t);
  raw[kRootNode] = {1.0};
  EXPECT_THROW(normalize_scores(t, raw, 0.0), ContractError);
}

// root -> a(1) -> c(3), a -> d(4); root -> b(2). Scores set per child.
struct Fixture {
  TokenTree tree{0};
  NodeId a, b, c, d;
  EdgeScores scores;
  Fixture(double sa, double sb, double sc, double sd) {
    a = tree.insert(kRootNode, 1, 0.8);
    b = tree.insert(kRootNode, 2, 0.1);
    c = tree.insert(a, 3, 0.6);
    d = tree.insert(a, 4, 0.1);
    tree.add_shadow(b, 5, 0.05);
    scores.value.assign(tree.size(), 0.0);
    scores.value[kRootNode] = std::nan("");
    scores.value[static_cast<std::size_t>(a)] = sa;
    scores.value[static_cast<std::size_t>(b)] = sb;
    scores.value[static_cast<std::size_t>(c)] = sc;
    scores.value[static_cast<std::size_t>(d)] = sd;
  }
};

TEST(Backbone, FollowsBestScore) {
  const Fixture f(0.7, 0.3, 0.2, 0.8);
  EXPECT_EQ(backbone_path(f.tree, f.scores), (std::vector<NodeId>{kRootNode, f.a, f.d}));
  EXPECT_EQ(backbone_path(f.tree, f.scores, 1), (std::vector<NodeId>{kRootNode, f.a}));
}

TEST(Backbone, TiesGoToReach) {
  const Fixture f(0.5, 0.5, 0.5, 0.5);
  EXPECT_EQ(backbone_path(f.tree, f.scores), (std::vector<NodeId>{kRootNode, f.a, f.c}));
}

TEST(Prune, NoOpWhenEverythingScoresHigh) {
  const Fixture f(0.9, 0.9, 0.9, 0.9);
  const auto out = prune(f.tree, f.scores, PruneConfig{});
  EXPECT_FALSE(out.decision.rejected);
  EXPECT_EQ(out.decision.keep, (std::vector<NodeId>{0, f.a, f.b, f.c, f.d}));
  EXPECT_EQ(out.compacted.tree.node_count(), f.tree.node_count());
  EXPECT_EQ(out.compacted.tree.size(), 5u);  // the shadow is dropped
}

TEST(Prune, RemovesSingleWeakLeaf) {
  const Fixture f(0.9, 0.1, 0.9, 0.05);
  PruneConfig cfg;
  cfg.min_leaves = 1;
  const auto out = prune(f.tree, f.scores, cfg);
  EXPECT_FALSE(out.decision.rejected);
  EXPECT_EQ(out.decision.keep, (std::vector<NodeId>{0, f.a, f.b, f.c}));
  EXPECT_EQ(out.compacted.tree.node_count(), 4);
  EXPECT_EQ(out.compacted.old_to_new[static_cast<std::size_t>(f.d)], kNoParent);
}

TEST(Prune, RejectsWhenTooFewLeavesSurvive) {
  const Fixture f(0.6, 0.4, 0.6, 0.4);
  PruneConfig cfg;
  cfg.theta = 0.9;
  cfg.root_keep = 0;
  const auto out = prune(f.tree, f.scores, cfg);
  EXPECT_TRUE(out.decision.rejected);
  EXPECT_EQ(out.compacted.tree.node_count(), f.tree.node_count());
  EXPECT_EQ(out.compacted.tree.leaf_count(), f.tree.leaf_count());
}

TEST(Prune, RootKeepProtectsDepthOne) {
  const Fixture f(0.9, 0.01, 0.9, 0.9);
  PruneConfig cfg;
  cfg.root_keep = 2;
  auto out = prune(f.tree, f.scores, cfg);
  EXPECT_NE(std::find(out.decision.keep.begin(), out.decision.keep.end(), f.b),
            out.decision.keep.end());
  cfg.root_keep = 1;
  cfg.min_leaves = 1;
  out = prune(f.tree, f.scores, cfg);
  EXPECT_EQ(std::find(out.decision.keep.begin(), out.decision.keep.end(), f.b),
            out.decision.keep.end());
}

TEST(Prune, ConfigAndShapeErrors) {
  const Fixture f(0.9, 0.9, 0.9, 0.9);
  PruneConfig cfg;
  cfg.theta = 1.0;
  EXPECT_THROW(prune(f.tree, f.scores, cfg), ConfigError);
  EdgeScores short_scores{{0.0}};
  EXPECT_THROW(prune(f.tree, short_scores, PruneConfig{}), ContractError);
}

TEST(Prune, RandomTreesAreAncestorClosed) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    TokenTree t(0);
    for (int i = 0; i < 25; ++i) {
      const NodeId p = static_cast<NodeId>(rng() % t.size());
      if (t.node(p).shadow) continue;
      const TokenId tok = static_cast<TokenId>(i + 1);
      if (u(rng) < 0.15) {
        t.add_shadow(p, tok, 0.5 * t.node(p).reach);
      } else {
        t.insert(p, tok, t.node(p).reach * u(rng));
      }
    }
    EdgeScores s{std::vector<double>(t.size())};
    for (double& v : s.value) v = u(rng);
    PruneConfig cfg;
    cfg.theta = 0.05 + 0.9 * u(rng);
    const auto out = prune(t, s, cfg);
    std::vector<bool> kept(t.size(), false);
    for (NodeId id : out.decision.keep) kept[static_cast<std::size_t>(id)] = true;
    for (NodeId id : out.decision.keep) {
      EXPECT_FALSE(t.node(id).shadow);
      if (id != kRootNode) EXPECT_TRUE(kept[static_cast<std::size_t>(t.node(id).parent)]);
    }
    for (NodeId id : out.decision.backbone) EXPECT_TRUE(kept[static_cast<std::size_t>(id)]);
    if (out.decision.rejected) {
      EXPECT_EQ(static_cast<int>(out.decision.keep.size()), t.node_count());
    }
    EXPECT_EQ(out.compacted.tree.recount(),
              std::make_pair(out.compacted.tree.node_count(),
                             out.compacted.tree.leaf_count()));
  }
}

TEST(DraftProbabilityScorer, LogOfDraftProbability) {
  TokenTree t(0);
  t.set_candidates(kRootNode, CandidateSet({{1, 0.75}, {2, 0.25}}));
  const NodeId a = t.insert(kRootNode, 1, 0.75);
  t.insert(kRootNode, 2, 0.25);
  const std::vector<TokenId> ctx{0};
  const DraftProbabilityScorer scorer;
  const auto raw = scorer.raw_scores(ctx, t, flatten(t));
  EXPECT_DOUBLE_EQ(raw[kRootNode][0], std::log(0.75));
  EXPECT_DOUBLE_EQ(normalize_scores(t, raw, 1.0)[a], 0.75);
}

TEST(PredictorScorer, UsesHiddenStatesAtPredictorLayer) {
  LayeredConfig mc;
  mc.vocab = 8;
  mc.hidden = 4;
  mc.layers = 4;
  const LayeredTargetModel model(mc);
  EarlyExitPredictor pred(8, 4, 2);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (double& w : pred.weights().data()) w = g(rng);
  TokenTree t(3);
  t.set_candidates(kRootNode, CandidateSet({{5, 0.5}, {6, 0.3}}));
  t.insert(kRootNode, 5, 0.5);
  const std::vector<TokenId> ctx{1, 3};
  const PredictorScorer scorer(model, pred);
  const auto raw = scorer.raw_scores(ctx, t, flatten(t));
  const auto h = model.hidden_at(2, ctx);
  EXPECT_DOUBLE_EQ(raw[kRootNode][0], pred.score(h, 5));
  EXPECT_DOUBLE_EQ(raw[kRootNode][1], pred.score(h, 6));
}

}  // namespace
}  // namespace flashspec
