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

#include "flashspec/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "flashspec/error.hpp"

namespace flashspec {
namespace {

constexpr std::uint64_t kMaxMaterializedEntries = std::uint64_t{1} << 21;

void fill_normal(std::mt19937_64& rng, std::span<double> out, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out) v = scale * normal(rng);
}

}  // namespace

CandidateSet draft_candidates(const ProbModel& model,
                              std::span<const TokenId> prefix, int k) {
  const int vocab = model.vocab_size();
  if (vocab <= 0) throw ConfigError("model has an empty vocabulary");
  if (k < 1 || k > vocab) {
    throw ContractError("candidate count must lie in [1, V]");
  }
  const std::vector<double> dist = model.next_dist(prefix);
  std::vector<TokenId> order(static_cast<std::size_t>(vocab));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](TokenId a, TokenId b) {
                      if (dist[a] != dist[b]) return dist[a] > dist[b];
                      return a < b;
                    });
  std::vector<Candidate> entries;
  entries.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    // Clamp away rounding residue so the set invariant holds.
    entries.push_back({order[i], std::clamp(dist[order[i]], 0.0, 1.0)});
  }
  return CandidateSet(std::move(entries));
}

std::vector<TokenId> target_greedy_decode(const ProbModel& model,
                                          std::span<const TokenId> prompt,
                                          int horizon) {
  if (horizon < 1) throw ContractError("horizon must be >= 1");
  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  std::vector<TokenId> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (int i = 0; i < horizon; ++i) {
    const auto next = static_cast<TokenId>(argmax(model.next_dist(seq)));
    seq.push_back(next);
    out.push_back(next);
  }
  return out;
}

TabularMarkovModel::TabularMarkovModel(TabularConfig config)
    : config_(config) {
  if (config_.vocab < 1) throw ConfigError("tabular model: vocab must be >= 1");
  if (config_.order < 1) throw ConfigError("tabular model: order must be >= 1");
  if (!(config_.sharpness >= 0.0)) {
    throw ConfigError("tabular model: sharpness must be >= 0");
  }
  rows_ = 1;
  for (int i = 0; i < config_.order; ++i) {
    rows_ *= static_cast<std::uint64_t>(config_.vocab);
    if (rows_ > (std::uint64_t{1} << 40)) {
      throw ConfigError("tabular model: table too large");
    }
  }
  const std::uint64_t entries = rows_ * static_cast<std::uint64_t>(config_.vocab);
  if (entries <= kMaxMaterializedEntries) {
    table_.reserve(entries);
    for (std::uint64_t r = 0; r < rows_; ++r) {
      const auto row = generate_row(r);
      table_.insert(table_.end(), row.begin(), row.end());
    }
  }
}

std::uint64_t TabularMarkovModel::row_index(
    std::span<const TokenId> prefix) const {
  const auto order = static_cast<std::size_t>(config_.order);
  std::uint64_t index = 0;
  for (std::size_t i = 0; i < order; ++i) {
    // Position i counts back from the oldest of the last `order` tokens.
    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(prefix.size()) -
                               static_cast<std::ptrdiff_t>(order) +
                               static_cast<std::ptrdiff_t>(i);
    TokenId t = pos >= 0 ? prefix[static_cast<std::size_t>(pos)] : 0;
    if (t < 0 || t >= config_.vocab) {
      throw ContractError("token " + std::to_string(t) + " outside vocabulary");
    }
    index = index * static_cast<std::uint64_t>(config_.vocab) +
            static_cast<std::uint64_t>(t);
  }
  return index;
}

std::vector<double> TabularMarkovModel::generate_row(std::uint64_t index) const {
  std::mt19937_64 rng(mix_seed(config_.seed, index));
  std::vector<double> logits(static_cast<std::size_t>(config_.vocab));
  fill_normal(rng, logits, config_.sharpness);
  return softmax(logits);
}

std::vector<double> TabularMarkovModel::row(std::uint64_t index) const {
  if (index >= rows_) throw ContractError("row index out of range");
  if (table_.empty()) return generate_row(index);
  const auto v = static_cast<std::size_t>(config_.vocab);
  const auto begin = table_.begin() + static_cast<std::ptrdiff_t>(index * v);
  return {begin, begin + static_cast<std::ptrdiff_t>(v)};
}

std::vector<double> TabularMarkovModel::next_dist(
    std::span<const TokenId> prefix) const {
  return row(row_index(prefix));
}

MixtureDraftModel::MixtureDraftModel(std::shared_ptr<const ProbModel> target,
                                     double alpha, TabularConfig noise,
                                     Mixing mixing)
    : target_(std::move(target)), alpha_(alpha), noise_([&] {
        if (!target_) throw ConfigError("draft derivation needs a target");
        noise.vocab = target_->vocab_size();
        return noise;
      }()), mixing_(mixing) {
  if (!(alpha_ >= 0.0 && alpha_ <= 1.0)) {
    throw ConfigError("draft agreement alpha must lie in [0, 1]");
  }
}

std::vector<double> MixtureDraftModel::next_dist(
    std::span<const TokenId> prefix) const {
  std::vector<double> p = target_->next_dist(prefix);
  if (alpha_ == 1.0) return p;
  const std::vector<double> q = noise_.next_dist(prefix);
  if (mixing_ == Mixing::kLinear) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = alpha_ * p[i] + (1.0 - alpha_) * q[i];
    }
    return p;
  }
  // Log-space blend; noise rows are strictly positive so log q is finite.
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double lp = p[i] > 0.0 ? std::log(p[i]) : -745.0;
    p[i] = alpha_ * lp + (1.0 - alpha_) * std::log(q[i]);
  }
  return softmax(p, 1.0);
}

LayeredTargetModel::LayeredTargetModel(LayeredConfig config)
    : config_(config) {
  if (config_.vocab < 1 || config_.context < 1 || config_.layers < 1 ||
      config_.hidden < 1) {
    throw ConfigError("layered model: dimensions must be positive");
  }
  const int v = config_.vocab;
  const int d = config_.hidden;
  std::mt19937_64 rng(mix_seed(config_.seed, 0x1a7e5ULL));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  for (int j = 0; j < config_.context; ++j) {
    Matrix e(v, d);
    fill_normal(rng, e.data(), 1.0);
    embeddings_.push_back(std::move(e));
  }
  for (int l = 0; l < config_.layers; ++l) {
    Matrix a(d, d);
    fill_normal(rng, a.data(), inv_sqrt_d);
    weights_.push_back(std::move(a));
    std::vector<double> b(static_cast<std::size_t>(d));
    fill_normal(rng, b, 0.1);
    biases_.push_back(std::move(b));
  }
  output_ = Matrix(v, d);
  fill_normal(rng, output_.data(), 1.0);
}

std::vector<double> LayeredTargetModel::embed(
    std::span<const TokenId> prefix) const {
  const auto d = static_cast<std::size_t>(config_.hidden);
  std::vector<double> h(d, 0.0);
  for (int j = 0; j < config_.context; ++j) {
    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(prefix.size()) - 1 - j;
    const TokenId t = pos >= 0 ? prefix[static_cast<std::size_t>(pos)] : 0;
    if (t < 0 || t >= config_.vocab) {
      throw ContractError("token " + std::to_string(t) + " outside vocabulary");
    }
    const auto row = embeddings_[static_cast<std::size_t>(j)].row(t);
    for (std::size_t i = 0; i < d; ++i) h[i] += row[i];
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(config_.context));
  for (double& x : h) x *= scale;
  return h;
}

void LayeredTargetModel::apply_layer(int layer, std::span<double> h) const {
  if (layer < 1 || layer > config_.layers) {
    throw ContractError("layer index out of range");
  }
  const auto& a = weights_[static_cast<std::size_t>(layer - 1)];
  const auto& b = biases_[static_cast<std::size_t>(layer - 1)];
  const std::vector<double> pre = matvec(a, h);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += std::tanh(pre[i] + b[i]);
}

std::vector<double> LayeredTargetModel::hidden_at(
    int layer, std::span<const TokenId> prefix) const {
  if (layer < 0 || layer > config_.layers) {
    throw ContractError("layer index out of range");
  }
  std::vector<double> h = embed(prefix);
  for (int l = 1; l <= layer; ++l) apply_layer(l, h);
  return h;
}

std::vector<double> LayeredTargetModel::project(
    std::span<const double> h) const {
  std::vector<double> z = matvec(output_, h);
  const double scale =
      config_.logit_scale / std::sqrt(static_cast<double>(config_.hidden));
  for (double& x : z) x *= scale;
  return z;
}

std::vector<double> LayeredTargetModel::logits(
    std::span<const TokenId> prefix) const {
  return project(hidden_at(config_.layers, prefix));
}

std::vector<double> LayeredTargetModel::next_dist(
    std::span<const TokenId> prefix) const {
  return softmax(logits(prefix));
}

std::vector<TokenId> node_prefix(std::span<const TokenId> context,
                                 const TokenTree& tree, NodeId node) {
  std::vector<TokenId> prefix(context.begin(), context.end());
  const std::vector<TokenId> path = tree.path_tokens(node);
  prefix.insert(prefix.end(), path.begin(), path.end());
  return prefix;
}

Matrix hidden_states(const LayeredTargetModel& model,
                     std::span<const TokenId> context, const TokenTree& tree,
                     const VerificationLayout& layout, int layer) {
  if (layer < 1 || layer > model.num_layers()) {
    throw ContractError("hidden_states: layer out of range");
  }
  const auto rows = static_cast<int>(layout.size());
  Matrix h(rows, model.hidden_dim());
  for (int i = 0; i < rows; ++i) {
    const auto e = model.embed(node_prefix(context, tree, layout.rows[i]));
    std::copy(e.begin(), e.end(), h.row(i).begin());
  }
  for (int l = 1; l <= layer; ++l) {
    for (int i = 0; i < rows; ++i) model.apply_layer(l, h.row(i));
  }
  return h;
}

}  // namespace flashspec
