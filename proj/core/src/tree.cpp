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

#include "flashspec/tree.hpp"

#include <algorithm>
#include <deque>
#include <string>

#include "flashspec/error.hpp"

namespace flashspec {

CandidateSet::CandidateSet(std::vector<Candidate> entries)
    : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const Candidate& c = entries_[i];
    if (c.token < 0) throw ContractError("candidate token must be >= 0");
    if (!(c.p_draft >= 0.0 && c.p_draft <= 1.0)) {
      throw ContractError("candidate probability outside [0, 1]");
    }
    if (i > 0 && entries_[i - 1].p_draft < c.p_draft) {
      throw ContractError("candidate set not sorted by probability");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (entries_[j].token == c.token) {
        throw ContractError("duplicate token in candidate set");
      }
    }
  }
}

bool CandidateSet::contains(TokenId token) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [token](const Candidate& c) { return c.token == token; });
}

FrontierEntry Frontier::take(std::size_t index) {
  if (index >= entries_.size()) throw StructuralError("frontier index");
  FrontierEntry entry = entries_[index];
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(index));
  return entry;
}

TokenTree::TokenTree(TokenId root_token) {
  TreeNode root;
  root.token = root_token;
  nodes_.push_back(std::move(root));
  live_children_.push_back(0);
}

const TreeNode& TokenTree::node(NodeId id) const {
  if (!contains(id)) {
    throw StructuralError("unknown node " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

NodeId TokenTree::append(NodeId parent, TokenId token, double reach,
                         bool shadow) {
  if (!contains(parent)) {
    throw StructuralError("parent " + std::to_string(parent) +
                          " is not in the tree");
  }
  const TreeNode& p = nodes_[static_cast<std::size_t>(parent)];
  if (p.shadow) throw StructuralError("shadow nodes cannot have children");
  if (token < 0) throw StructuralError("negative token id");
  for (NodeId c : p.children) {
    if (nodes_[static_cast<std::size_t>(c)].token == token) {
      throw StructuralError("duplicate child token " + std::to_string(token));
    }
  }
  if (!(reach >= 0.0 && reach <= p.reach)) {
    throw StructuralError("child reach must lie in [0, parent reach]");
  }

  TreeNode n;
  n.token = token;
  n.parent = parent;
  n.depth = p.depth + 1;
  n.reach = reach;
  n.shadow = shadow;
  const auto id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(std::move(n));
  live_children_.push_back(0);
  nodes_[static_cast<std::size_t>(parent)].children.push_back(id);

  if (!shadow) {
    ++node_count_;
    // A parent that was a leaf hands its leaf status to the new child.
    if (live_children_[static_cast<std::size_t>(parent)] > 0) ++leaf_count_;
    ++live_children_[static_cast<std::size_t>(parent)];
  }
  return id;
}

NodeId TokenTree::insert(NodeId parent, TokenId token, double reach) {
  return append(parent, token, reach, /*shadow=*/false);
}

NodeId TokenTree::add_shadow(NodeId parent, TokenId token, double reach) {
  return append(parent, token, reach, /*shadow=*/true);
}

void TokenTree::set_candidates(NodeId node, CandidateSet candidates) {
  if (!contains(node)) throw StructuralError("unknown node");
  if (nodes_[static_cast<std::size_t>(node)].shadow) {
    throw StructuralError("shadow nodes are never expanded");
  }
  nodes_[static_cast<std::size_t>(node)].candidates = std::move(candidates);
}

bool TokenTree::is_leaf(NodeId id) const {
  return !node(id).shadow && live_children_[static_cast<std::size_t>(id)] == 0;
}

std::optional<NodeId> TokenTree::find_child(NodeId parent,
                                            TokenId token) const {
  for (NodeId c : node(parent).children) {
    const TreeNode& n = nodes_[static_cast<std::size_t>(c)];
    if (!n.shadow && n.token == token) return c;
  }
  return std::nullopt;
}

std::vector<TokenId> TokenTree::path_tokens(NodeId id) const {
  std::vector<TokenId> out;
  for (NodeId cur = id; cur != kRootNode; cur = node(cur).parent) {
    out.push_back(node(cur).token);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::pair<int, int> TokenTree::recount() const {
  int count = 0;
  int leaves = 0;
  for (const TreeNode& n : nodes_) {
    if (n.shadow) continue;
    ++count;
    const bool has_live_child =
        std::any_of(n.children.begin(), n.children.end(), [&](NodeId c) {
          return !nodes_[static_cast<std::size_t>(c)].shadow;
        });
    if (!has_live_child) ++leaves;
  }
  return {count, leaves};
}

NodeId insert_node(TokenTree& tree, Frontier& frontier, std::size_t index) {
  if (index >= frontier.size()) throw StructuralError("frontier index");
  const FrontierEntry& e = frontier.entries()[index];
  const NodeId id = tree.insert(e.parent, e.token, e.reach);
  frontier.take(index);
  return id;
}

std::optional<std::size_t> VerificationLayout::row_of(NodeId node) const {
  auto it = std::find(rows.begin(), rows.end(), node);
  if (it == rows.end()) return std::nullopt;
  return static_cast<std::size_t>(it - rows.begin());
}

VerificationLayout flatten(const TokenTree& tree) {
  VerificationLayout out;
  std::vector<int> row_index(tree.size(), -1);
  std::deque<NodeId> queue{kRootNode};
  while (!queue.empty()) {
    const NodeId id = queue.front();
    queue.pop_front();
    const TreeNode& n = tree.node(id);
    row_index[static_cast<std::size_t>(id)] = static_cast<int>(out.rows.size());
    out.rows.push_back(id);
    out.tokens.push_back(n.token);
    out.depth.push_back(n.depth);
    out.parent_index.push_back(
        n.parent == kNoParent ? -1 : row_index[static_cast<std::size_t>(n.parent)]);
    for (NodeId c : n.children) {
      if (!tree.node(c).shadow) queue.push_back(c);
    }
  }

  const std::size_t rows = out.rows.size();
  out.mask.assign(rows * rows, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    const int p = out.parent_index[i];
    if (p >= 0) {
      std::copy_n(out.mask.begin() + static_cast<std::ptrdiff_t>(p * rows),
                  rows,
                  out.mask.begin() + static_cast<std::ptrdiff_t>(i * rows));
    }
    out.mask[i * rows + i] = 1;
  }
  return out;
}

CompactResult compact(const TokenTree& tree, std::span<const NodeId> keep) {
  std::vector<bool> kept(tree.size(), false);
  for (NodeId id : keep) {
    if (!tree.contains(id)) throw ContractError("keep set holds unknown node");
    kept[static_cast<std::size_t>(id)] = true;
  }
  if (!kept[kRootNode]) throw ContractError("keep set must contain the root");
  for (std::size_t i = 1; i < tree.size(); ++i) {
    if (kept[i] && !kept[static_cast<std::size_t>(
                       tree.node(static_cast<NodeId>(i)).parent)]) {
      throw ContractError("keep set is not ancestor-closed");
    }
  }

  CompactResult out{TokenTree(tree.node(kRootNode).token),
                    std::vector<NodeId>(tree.size(), kNoParent)};
  out.old_to_new[kRootNode] = kRootNode;
  // Parents always carry smaller handles than their children, so a single
  // increasing pass sees every parent before its children.
  for (std::size_t i = 1; i < tree.size(); ++i) {
    if (!kept[i]) continue;
    const TreeNode& n = tree.node(static_cast<NodeId>(i));
    const NodeId parent = out.old_to_new[static_cast<std::size_t>(n.parent)];
    out.old_to_new[i] = n.shadow ? out.tree.add_shadow(parent, n.token, n.reach)
                                 : out.tree.insert(parent, n.token, n.reach);
  }
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const TreeNode& n = tree.node(static_cast<NodeId>(i));
    if (kept[i] && n.candidates) {
      out.tree.set_candidates(out.old_to_new[i], *n.candidates);
    }
  }
  return out;
}

nlohmann::json tree_to_json(const TokenTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const TreeNode& n = tree.node(static_cast<NodeId>(i));
    nlohmann::json j = {{"id", i},
                        {"parent", n.parent},
                        {"token", n.token},
                        {"reach", n.reach},
                        {"shadow", n.shadow}};
    if (n.candidates) {
      nlohmann::json cands = nlohmann::json::array();
      for (const Candidate& c : n.candidates->entries()) {
        cands.push_back({c.token, c.p_draft});
      }
      j["candidates"] = std::move(cands);
    }
    nodes.push_back(std::move(j));
  }
  return {{"nodes", std::move(nodes)}};
}

TokenTree tree_from_json(const nlohmann::json& doc) {
  const auto& nodes = doc.at("nodes");
  if (!nodes.is_array() || nodes.empty()) {
    throw StructuralError("tree document has no nodes");
  }
  const auto& root = nodes.front();
  if (root.at("id").get<NodeId>() != kRootNode ||
      root.at("parent").get<NodeId>() != kNoParent) {
    throw StructuralError("first node must be the root");
  }
  TokenTree tree(root.at("token").get<TokenId>());
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    const auto& j = nodes[i];
    if (j.at("id").get<std::size_t>() != i) {
      throw StructuralError("node ids must be dense and ordered");
    }
    const auto parent = j.at("parent").get<NodeId>();
    const auto token = j.at("token").get<TokenId>();
    const auto reach = j.at("reach").get<double>();
    if (j.at("shadow").get<bool>()) {
      tree.add_shadow(parent, token, reach);
    } else {
      tree.insert(parent, token, reach);
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!nodes[i].contains("candidates")) continue;
    std::vector<Candidate> entries;
    for (const auto& c : nodes[i]["candidates"]) {
      entries.push_back({c.at(0).get<TokenId>(), c.at(1).get<double>()});
    }
    tree.set_candidates(static_cast<NodeId>(i), CandidateSet(std::move(entries)));
  }
  return tree;
}

}  // namespace flashspec
