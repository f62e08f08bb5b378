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

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "flashspec/numeric.hpp"
#include "flashspec/tree.hpp"

namespace flashspec {

// Conditional next-token distribution. Implementations are immutable after
// construction and re-condition on the full prefix on every call.
class ProbModel {
 public:
  virtual ~ProbModel() = default;

  virtual int vocab_size() const = 0;
  virtual std::vector<double> next_dist(
      std::span<const TokenId> prefix) const = 0;
};

// Top-k tokens of next_dist(prefix), descending, ties to the smaller id.
CandidateSet draft_candidates(const ProbModel& model,
                              std::span<const TokenId> prefix, int k);

// Temperature-0 continuation of `prompt`; the losslessness reference.
std::vector<TokenId> target_greedy_decode(const ProbModel& model,
                                          std::span<const TokenId> prompt,
                                          int horizon);

struct TabularConfig {
  int vocab = 32;
  int order = 2;
  // Scale applied to standard-normal logits; larger is more peaked.
  double sharpness = 3.0;
  std::uint64_t seed = 1;
};

// Order-m Markov model. Row r of the V^m x V table is generated from
// (seed, r) alone, so small tables are materialized and large ones are
// produced on demand with identical values.
class TabularMarkovModel final : public ProbModel {
 public:
  explicit TabularMarkovModel(TabularConfig config);

  int vocab_size() const override { return config_.vocab; }
  std::vector<double> next_dist(std::span<const TokenId> prefix) const override;

  const TabularConfig& config() const { return config_; }
  std::uint64_t row_count() const { return rows_; }
  // Table row addressed by the last `order` tokens (left-padded with 0).
  std::uint64_t row_index(std::span<const TokenId> prefix) const;
  std::vector<double> row(std::uint64_t index) const;

 private:
  std::vector<double> generate_row(std::uint64_t index) const;

  TabularConfig config_;
  std::uint64_t rows_ = 0;
  std::vector<double> table_;  // empty when rows are generated lazily
};

enum class Mixing {
  kLinear,     // alpha * p + (1 - alpha) * n
  kGeometric,  // p^alpha * n^(1 - alpha), renormalized
};

// Draft derived from a target by mixing it with an independently seeded
// tabular noise model. alpha = 1 reproduces the target exactly.
class MixtureDraftModel final : public ProbModel {
 public:
  MixtureDraftModel(std::shared_ptr<const ProbModel> target, double alpha,
                    TabularConfig noise, Mixing mixing = Mixing::kLinear);

  int vocab_size() const override { return target_->vocab_size(); }
  std::vector<double> next_dist(std::span<const TokenId> prefix) const override;

  double alpha() const { return alpha_; }
  Mixing mixing() const { return mixing_; }

 private:
  std::shared_ptr<const ProbModel> target_;
  double alpha_;
  TabularMarkovModel noise_;
  Mixing mixing_;
};

struct LayeredConfig {
  int vocab = 32;
  int context = 2;  // m: tokens embedded per position
  int layers = 6;   // D
  int hidden = 32;  // d
  double logit_scale = 2.5;
  std::uint64_t seed = 1;
};

// Residual tanh stack over position-specific embeddings of the last m
// tokens:  h_0 = sum_j E_j[x_{t-j}] / sqrt(m),
//          h_l = h_{l-1} + tanh(A_l h_{l-1} + b_l),
//          logits = (logit_scale / sqrt(d)) * U h_D.
class LayeredTargetModel final : public ProbModel {
 public:
  explicit LayeredTargetModel(LayeredConfig config);

  int vocab_size() const override { return config_.vocab; }
  std::vector<double> next_dist(std::span<const TokenId> prefix) const override;

  const LayeredConfig& config() const { return config_; }
  int num_layers() const { return config_.layers; }
  int hidden_dim() const { return config_.hidden; }

  std::vector<double> embed(std::span<const TokenId> prefix) const;
  // Applies layer `layer` (1-based) to h in place.
  void apply_layer(int layer, std::span<double> h) const;
  // Hidden state after `layer` layers, 0 <= layer <= D.
  std::vector<double> hidden_at(int layer, std::span<const TokenId> prefix) const;
  std::vector<double> project(std::span<const double> h) const;
  std::vector<double> logits(std::span<const TokenId> prefix) const;

 private:
  LayeredConfig config_;
  std::vector<Matrix> embeddings_;  // m matrices, V x d
  std::vector<Matrix> weights_;     // D matrices, d x d
  std::vector<std::vector<double>> biases_;
  Matrix output_;                   // V x d
};

// Layer-`layer` hidden state of every verification row, where row i is
// conditioned on context followed by the path to that row's node. Evaluated
// layer-major over the whole batch; each row's arithmetic is identical to a
// standalone hidden_at call.
Matrix hidden_states(const LayeredTargetModel& model,
                     std::span<const TokenId> context, const TokenTree& tree,
                     const VerificationLayout& layout, int layer);

// context ++ path(node)
std::vector<TokenId> node_prefix(std::span<const TokenId> context,
                                 const TokenTree& tree, NodeId node);

}  // namespace flashspec
