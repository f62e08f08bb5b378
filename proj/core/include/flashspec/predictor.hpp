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
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "flashspec/models.hpp"
#include "flashspec/numeric.hpp"

namespace flashspec {

// Linear early-exit head W (V x d) reading layer-`layer` hidden states.
class EarlyExitPredictor {
 public:
  EarlyExitPredictor() = default;
  // Zero-initialized. Requires 1 <= layer.
  EarlyExitPredictor(int vocab, int hidden, int layer);

  int vocab_size() const { return weights_.rows(); }
  int hidden_dim() const { return weights_.cols(); }
  int layer() const { return layer_; }

  Matrix& weights() { return weights_; }
  const Matrix& weights() const { return weights_; }

  // W[token] . h
  double score(std::span<const double> h, TokenId token) const;
  // W h, one entry per vocabulary token.
  std::vector<double> logits(std::span<const double> h) const;

  // {"vocab": V, "hidden": d, "layer": L, "weights": [row-major V*d]}
  nlohmann::json to_json() const;
  static EarlyExitPredictor from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static EarlyExitPredictor load(const std::filesystem::path& path);

 private:
  Matrix weights_;
  int layer_ = 1;
};

struct TrainConfig {
  double tau_kd = 2.0;
  double tau_cand = 1.0;
  double lambda_cand = 0.5;
  double learning_rate = 0.05;
  int epochs = 20;
  int batch_size = 32;
  std::uint64_t seed = 1;
};

void validate(const TrainConfig& config);

struct TrainingExample {
  std::vector<double> hidden;      // h_t at the early-exit layer
  std::vector<double> logits;      // final target logits z_t
  std::vector<TokenId> candidates; // drafted candidate set at position t
};

// tau^2 * sum_t KL(softmax(z_t / tau) || softmax(W h_t / tau)).
double kd_loss(const EarlyExitPredictor& predictor,
               std::span<const TrainingExample> batch, double tau);

// tau^2 * sum_t KL(q_T || q_E), both softmaxes restricted to the candidates.
double cand_loss(const EarlyExitPredictor& predictor,
                 std::span<const TrainingExample> batch, double tau);

// kd_loss + lambda * cand_loss.
double total_loss(const EarlyExitPredictor& predictor,
                  std::span<const TrainingExample> batch,
                  const TrainConfig& config);

// Analytic d(total_loss)/dW.
Matrix loss_gradient(const EarlyExitPredictor& predictor,
                     std::span<const TrainingExample> batch,
                     const TrainConfig& config);

struct TrainResult {
  EarlyExitPredictor predictor;
  double initial_loss = 0.0;       // mean per example, before any step
  std::vector<double> loss_curve;  // mean per example after each epoch
};

// Mini-batch gradient descent on W only; the step uses the batch-mean
// gradient. Throws TrainingDivergence on a non-finite loss.
TrainResult train(EarlyExitPredictor initial,
                  std::span<const TrainingExample> dataset,
                  const TrainConfig& config);

struct DatasetSpec {
  int count = 2000;
  int prefix_length = 8;
  int candidates = 4;
  std::uint64_t seed = 1;
};

// Runs the frozen target over seeded random prefixes, recording the
// layer-`layer` hidden state, the final logits, and the draft's top-k set.
std::vector<TrainingExample> generate_dataset(const LayeredTargetModel& target,
                                              const ProbModel& draft, int layer,
                                              const DatasetSpec& spec);

// Fraction of examples where the predictor's top candidate (ties to the
// smaller token id) equals the target's top candidate within the set.
double candidate_agreement(const EarlyExitPredictor& predictor,
                           std::span<const TrainingExample> examples);

}  // namespace flashspec
