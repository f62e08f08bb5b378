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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace flashspec {

using TokenId = std::int32_t;

// Stable handle into a TokenTree. Handles are dense and append-only until a
// tree is compacted, which renumbers them.
using NodeId = std::int32_t;

inline constexpr NodeId kRootNode = 0;
inline constexpr NodeId kNoParent = -1;

struct Candidate {
  TokenId token = 0;
  double p_draft = 0.0;

  bool operator==(const Candidate&) const = default;
};

// Top-k draft proposals from one parent, sorted by descending probability.
class CandidateSet {
 public:
  CandidateSet() = default;
  // Throws ContractError unless entries are sorted descending, distinct, and
  // every probability lies in [0, 1].
  explicit CandidateSet(std::vector<Candidate> entries);

  std::span<const Candidate> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool contains(TokenId token) const;

  bool operator==(const CandidateSet&) const = default;

 private:
  std::vector<Candidate> entries_;
};

struct TreeNode {
  TokenId token = 0;
  NodeId parent = kNoParent;
  int depth = 0;
  double reach = 1.0;
  bool shadow = false;
  std::vector<NodeId> children;  // insertion order, shadows included
  std::optional<CandidateSet> candidates;  // set once the node is expanded
};

// A drafted child whose parent is in the tree but which is not inserted yet.
struct FrontierEntry {
  NodeId parent = kNoParent;
  TokenId token = 0;
  double p_draft = 0.0;
  double reach = 0.0;

  bool operator==(const FrontierEntry&) const = default;
};

class Frontier {
 public:
  void push(FrontierEntry entry) { entries_.push_back(entry); }
  FrontierEntry take(std::size_t index);

  std::span<const FrontierEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<FrontierEntry> entries_;
};

// Branching draft structure. The root row carries the last context token and
// always enters verification, so node_count() includes it.
class TokenTree {
 public:
  explicit TokenTree(TokenId root_token = 0);

  // Adds a verifiable child. Throws StructuralError if the parent is missing
  // or shadow, if the parent already has a child with this token, or if the
  // reach exceeds the parent's.
  NodeId insert(NodeId parent, TokenId token, double reach);

  // Adds a comparison-only child. Shadows are never flattened or verified.
  NodeId add_shadow(NodeId parent, TokenId token, double reach);

  void set_candidates(NodeId node, CandidateSet candidates);

  const TreeNode& node(NodeId id) const;
  bool contains(NodeId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < nodes_.size();
  }

  // Stored nodes, shadows included.
  std::size_t size() const { return nodes_.size(); }

  // |T|: non-shadow nodes including the root.
  int node_count() const { return node_count_; }
  // L_T: non-shadow nodes without non-shadow children.
  int leaf_count() const { return leaf_count_; }

  bool is_leaf(NodeId id) const;
  int verifiable_children(NodeId id) const { return live_children_.at(id); }
  std::optional<NodeId> find_child(NodeId parent, TokenId token) const;

  // Tokens on the path root -> id, root token excluded.
  std::vector<TokenId> path_tokens(NodeId id) const;

  // Recounts |T| and L_T from scratch; used to audit the incremental values.
  std::pair<int, int> recount() const;

 private:
  NodeId append(NodeId parent, TokenId token, double reach, bool shadow);

  std::vector<TreeNode> nodes_;
  std::vector<int> live_children_;
  int node_count_ = 1;
  int leaf_count_ = 1;
};

// Moves frontier entry `index` into the tree and returns the new handle.
NodeId insert_node(TokenTree& tree, Frontier& frontier, std::size_t index);

// Flattened verification batch. Rows are in breadth-first order, so every
// parent precedes its children; mask(i, j) is true iff row j is row i or one
// of its ancestors.
struct VerificationLayout {
  std::vector<NodeId> rows;
  std::vector<int> parent_index;  // -1 for the root row
  std::vector<TokenId> tokens;
  std::vector<int> depth;
  std::vector<std::uint8_t> mask;

  std::size_t size() const { return rows.size(); }
  bool ancestor_or_self(std::size_t i, std::size_t j) const {
    return mask[i * rows.size() + j] != 0;
  }
  std::optional<std::size_t> row_of(NodeId node) const;
};

VerificationLayout flatten(const TokenTree& tree);

struct CompactResult {
  TokenTree tree;
  std::vector<NodeId> old_to_new;  // kNoParent for dropped nodes
};

// Builds a new tree holding exactly `keep`. Throws ContractError when `keep`
// lacks the root or is not closed under ancestors.
CompactResult compact(const TokenTree& tree, std::span<const NodeId> keep);

// Debug serialization: {"nodes":[{"id","parent","token","reach","shadow"}]}.
nlohmann::json tree_to_json(const TokenTree& tree);
TokenTree tree_from_json(const nlohmann::json& doc);

}  // namespace flashspec
