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

#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "flashspec/error.hpp"
#include "flashspec/tree.hpp"

namespace flashspec {
namespace {

// Random tree with `extra` non-root nodes; tokens are distinct per parent.
TokenTree random_tree(int extra, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TokenTree tree(0);
  for (int i = 0; i < extra; ++i) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(tree.size()) - 1);
    while (true) {
      const NodeId parent = pick(rng);
      const TokenId token = std::uniform_int_distribution<int>(0, 15)(rng);
      if (tree.find_child(parent, token)) continue;
      tree.insert(parent, token, tree.node(parent).reach * 0.5);
      break;
    }
  }
  return tree;
}

bool walk_is_ancestor(const TokenTree& tree, NodeId anc, NodeId node) {
  for (NodeId n = node; n != kNoParent; n = tree.node(n).parent) {
    if (n == anc) return true;
  }
  return false;
}

TEST(CandidateSet, RejectsUnsortedDuplicateAndOutOfRange) {
  EXPECT_NO_THROW(CandidateSet({{1, 0.5}, {0, 0.5}, {2, 0.1}}));
  EXPECT_THROW(CandidateSet({{1, 0.2}, {0, 0.5}}), ContractError);
  EXPECT_THROW(CandidateSet({{1, 0.5}, {1, 0.2}}), ContractError);
  EXPECT_THROW(CandidateSet({{1, 1.5}}), ContractError);
  EXPECT_THROW(CandidateSet({{1, -0.1}}), ContractError);
}

TEST(TokenTree, RootInvariants) {
  TokenTree tree(7);
  const TreeNode& root = tree.node(kRootNode);
  EXPECT_EQ(root.token, 7);
  EXPECT_EQ(root.depth, 0);
  EXPECT_EQ(root.reach, 1.0);
  EXPECT_FALSE(root.shadow);
  EXPECT_EQ(tree.node_count(), 1);
  EXPECT_EQ(tree.leaf_count(), 1);
}

TEST(TokenTree, InsertCountsFollowShape) {
  TokenTree tree;
  Frontier frontier;
  frontier.push({kRootNode, 3, 0.6, 0.6});
  const NodeId a = insert_node(tree, frontier, 0);
  EXPECT_TRUE(frontier.empty());
  EXPECT_EQ(tree.node_count(), 2);
  EXPECT_EQ(tree.leaf_count(), 1);

  tree.insert(kRootNode, 4, 0.3);
  EXPECT_EQ(tree.node_count(), 3);
  EXPECT_EQ(tree.leaf_count(), 2);

  tree.insert(a, 5, 0.4);
  EXPECT_EQ(tree.node_count(), 4);
  EXPECT_EQ(tree.leaf_count(), 2);
  EXPECT_EQ(tree.node(3).depth, 2);
}

TEST(TokenTree, StructuralErrors) {
  TokenTree tree;
  const NodeId a = tree.insert(kRootNode, 1, 0.5);
  EXPECT_THROW(tree.insert(42, 1, 0.1), StructuralError);
  EXPECT_THROW(tree.insert(kRootNode, 1, 0.2), StructuralError);
  EXPECT_THROW(tree.insert(a, 2, 0.9), StructuralError);
  const NodeId s = tree.add_shadow(kRootNode, 9, 0.1);
  EXPECT_THROW(tree.insert(s, 2, 0.05), StructuralError);
}

TEST(TokenTree, ShadowsDoNotCount) {
  TokenTree tree;
  tree.insert(kRootNode, 1, 0.5);
  tree.add_shadow(kRootNode, 2, 0.2);
  EXPECT_EQ(tree.node_count(), 2);
  EXPECT_EQ(tree.leaf_count(), 1);
  EXPECT_EQ(tree.size(), 3u);
  EXPECT_FALSE(tree.find_child(kRootNode, 2).has_value());
  EXPECT_EQ(flatten(tree).size(), 2u);
}

TEST(TokenTree, IncrementalCountsMatchRecount) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    TokenTree tree = random_tree(20, seed);
    const auto [n, l] = tree.recount();
    EXPECT_EQ(n, tree.node_count());
    EXPECT_EQ(l, tree.leaf_count());
    std::vector<NodeId> keep{kRootNode};
    for (NodeId id = 1; id < static_cast<NodeId>(tree.size()); ++id) {
      if (std::find(keep.begin(), keep.end(), tree.node(id).parent) != keep.end() &&
          id % 3 != 0) {
        keep.push_back(id);
      }
    }
    const auto compacted = compact(tree, keep);
    const auto [cn, cl] = compacted.tree.recount();
    EXPECT_EQ(cn, compacted.tree.node_count());
    EXPECT_EQ(cl, compacted.tree.leaf_count());
    EXPECT_EQ(cn, static_cast<int>(keep.size()));
  }
}

TEST(Flatten, ChainHasLowerTriangularMask) {
  TokenTree tree;
  const NodeId a = tree.insert(kRootNode, 1, 0.5);
  tree.insert(a, 2, 0.25);
  const auto layout = flatten(tree);
  ASSERT_EQ(layout.size(), 3u);
  EXPECT_EQ(layout.rows, (std::vector<NodeId>{0, 1, 2}));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(layout.ancestor_or_self(i, j), j <= i) << i << "," << j;
    }
  }
}

TEST(Flatten, SiblingsAreIndependent) {
  TokenTree tree;
  tree.insert(kRootNode, 1, 0.5);
  tree.insert(kRootNode, 2, 0.4);
  const auto layout = flatten(tree);
  EXPECT_FALSE(layout.ancestor_or_self(1, 2));
  EXPECT_FALSE(layout.ancestor_or_self(2, 1));
  EXPECT_TRUE(layout.ancestor_or_self(1, 0));
  EXPECT_TRUE(layout.ancestor_or_self(2, 0));
}

TEST(Flatten, MaskEqualsTransitiveClosure) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    TokenTree tree = random_tree(seed % 2 ? 4 : 12, seed);
    tree.add_shadow(kRootNode, 99, 0.01);
    const auto layout = flatten(tree);
    ASSERT_EQ(static_cast<int>(layout.size()), tree.node_count());
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (i > 0) EXPECT_LT(layout.parent_index[i], static_cast<int>(i));
      EXPECT_EQ(layout.depth[i], tree.node(layout.rows[i]).depth);
      for (std::size_t j = 0; j < layout.size(); ++j) {
        EXPECT_EQ(layout.ancestor_or_self(i, j),
                  walk_is_ancestor(tree, layout.rows[j], layout.rows[i]));
      }
    }
  }
}

TEST(Compact, IdentityAndDegenerate) {
  const TokenTree tree = random_tree(8, 3);
  std::vector<NodeId> all(tree.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<NodeId>(i);
  const auto same = compact(tree, all);
  EXPECT_EQ(tree_to_json(same.tree), tree_to_json(tree));

  const auto root_only = compact(tree, std::vector<NodeId>{kRootNode});
  EXPECT_EQ(root_only.tree.node_count(), 1);
  EXPECT_EQ(root_only.tree.leaf_count(), 1);
  EXPECT_EQ(tree.node_count(), 9);  // original untouched
}

TEST(Compact, RejectsOpenKeepSets) {
  TokenTree tree;
  const NodeId a = tree.insert(kRootNode, 1, 0.5);
  const NodeId b = tree.insert(a, 2, 0.25);
  EXPECT_THROW(compact(tree, std::vector<NodeId>{kRootNode, b}), ContractError);
  EXPECT_THROW(compact(tree, std::vector<NodeId>{a}), ContractError);
}

TEST(Compact, BackboneOnlyYieldsChain) {
  const TokenTree tree = random_tree(8, 11);
  // Oracle: deepest node, then walk to the root.
  NodeId deepest = kRootNode;
  for (NodeId id = 0; id < static_cast<NodeId>(tree.size()); ++id) {
    if (tree.node(id).depth > tree.node(deepest).depth) deepest = id;
  }
  std::vector<NodeId> path;
  for (NodeId n = deepest; n != kNoParent; n = tree.node(n).parent) path.push_back(n);
  std::sort(path.begin(), path.end());
  const auto chain = compact(tree, path);
  EXPECT_EQ(chain.tree.node_count(), static_cast<int>(path.size()));
  EXPECT_EQ(chain.tree.leaf_count(), 1);
  EXPECT_EQ(chain.tree.path_tokens(chain.old_to_new[deepest]),
            tree.path_tokens(deepest));
}

TEST(Compact, FlattenMultisetPreserved) {
  const TokenTree tree = random_tree(10, 5);
  std::vector<NodeId> all(tree.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<NodeId>(i);
  const auto a = flatten(tree);
  const auto b = flatten(compact(tree, all).tree);
  std::multiset<std::vector<TokenId>> pa, pb;
  for (NodeId n : a.rows) pa.insert(tree.path_tokens(n));
  const auto c = compact(tree, all);
  for (NodeId n : b.rows) pb.insert(c.tree.path_tokens(n));
  EXPECT_EQ(pa, pb);
}

TEST(TreeJson, GoldenShapeAndRoundTrip) {
  TokenTree tree(5);
  const NodeId a = tree.insert(kRootNode, 3, 0.5);
  tree.add_shadow(kRootNode, 4, 0.25);
  tree.set_candidates(kRootNode, CandidateSet({{3, 0.5}, {4, 0.25}}));
  tree.insert(a, 1, 0.125);
  const auto doc = tree_to_json(tree);
  const auto golden = nlohmann::json::parse(R"({"nodes":[
    {"id":0,"parent":-1,"token":5,"reach":1.0,"shadow":false,"candidates":[[3,0.5],[4,0.25]]},
    {"id":1,"parent":0,"token":3,"reach":0.5,"shadow":false},
    {"id":2,"parent":0,"token":4,"reach":0.25,"shadow":true},
    {"id":3,"parent":1,"token":1,"reach":0.125,"shadow":false}]})");
  EXPECT_EQ(doc, golden);
  const TokenTree back = tree_from_json(doc);
  EXPECT_EQ(tree_to_json(back), doc);
  EXPECT_EQ(back.node_count(), 3);
  EXPECT_EQ(back.leaf_count(), 1);
}

}  // namespace
}  // namespace flashspec
