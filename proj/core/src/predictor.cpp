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

#include "flashspec/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "flashspec/error.hpp"

namespace flashspec {

EarlyExitPredictor::EarlyExitPredictor(int vocab, int hidden, int layer)
    : weights_(vocab, hidden, 0.0), layer_(layer) {
  if (vocab < 1 || hidden < 1) {
    throw ConfigError("predictor dimensions must be positive");
  }
  if (layer < 1) throw ConfigError("predictor layer must be >= 1");
}

double EarlyExitPredictor::score(std::span<const double> h,
                                 TokenId token) const {
  if (token < 0 || token >= vocab_size()) {
    throw ContractError("score: token outside vocabulary");
  }
  if (static_cast<int>(h.size()) != hidden_dim()) {
    throw ContractError("score: hidden dimension mismatch");
  }
  return dot(weights_.row(token), h);
}

std::vector<double> EarlyExitPredictor::logits(
    std::span<const double> h) const {
  if (static_cast<int>(h.size()) != hidden_dim()) {
    throw ContractError("logits: hidden dimension mismatch");
  }
  return matvec(weights_, h);
}

nlohmann::json EarlyExitPredictor::to_json() const {
  const auto w = weights_.data();
  return {{"vocab", vocab_size()},
          {"hidden", hidden_dim()},
          {"layer", layer_},
          {"weights", std::vector<double>(w.begin(), w.end())}};
}

EarlyExitPredictor EarlyExitPredictor::from_json(const nlohmann::json& doc) {
  EarlyExitPredictor p(doc.at("vocab").get<int>(), doc.at("hidden").get<int>(),
                       doc.at("layer").get<int>());
  const auto w = doc.at("weights").get<std::vector<double>>();
  if (w.size() != p.weights_.data().size()) {
    throw ConfigError("predictor checkpoint: weight count mismatch");
  }
  for (double v : w) {
    if (!std::isfinite(v)) throw ConfigError("predictor checkpoint: non-finite weight");
  }
  std::copy(w.begin(), w.end(), p.weights_.data().begin());
  return p;
}

void EarlyExitPredictor::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write predictor " + path.string());
  out << to_json().dump() << '\n';
}

EarlyExitPredictor EarlyExitPredictor::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read predictor " + path.string());
  return from_json(nlohmann::json::parse(in));
}

void validate(const TrainConfig& config) {
  if (!(config.tau_kd > 0.0) || !(config.tau_cand > 0.0)) {
    throw ConfigError("training temperatures must be > 0");
  }
  if (!(config.lambda_cand >= 0.0)) throw ConfigError("lambda_cand must be >= 0");
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (config.epochs < 1 || config.batch_size < 1) {
    throw ConfigError("epochs and batch size must be >= 1");
  }
}

namespace {

double kl(std::span<const double> log_p, std::span<const double> log_q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < log_p.size(); ++i) {
    const double p = std::exp(log_p[i]);
    if (p > 0.0) acc += p * (log_p[i] - log_q[i]);
  }
  return acc;
}

std::vector<double> gather(std::span<const double> values,
                           std::span<const TokenId> tokens) {
  std::vector<double> out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) out.push_back(values[static_cast<std::size_t>(t)]);
  return out;
}

void check_example(const EarlyExitPredictor& p, const TrainingExample& ex) {
  if (static_cast<int>(ex.hidden.size()) != p.hidden_dim() ||
      static_cast<int>(ex.logits.size()) != p.vocab_size()) {
    throw ContractError("training example dimension mismatch");
  }
}

// Restricted argmax over `tokens`, ties to the smaller token id.
TokenId top_candidate(std::span<const double> values,
                      std::span<const TokenId> tokens) {
  TokenId best = tokens.front();
  for (TokenId t : tokens) {
    const double v = values[static_cast<std::size_t>(t)];
    const double b = values[static_cast<std::size_t>(best)];
    if (v > b || (v == b && t < best)) best = t;
  }
  return best;
}

}  // namespace

double kd_loss(const EarlyExitPredictor& predictor,
               std::span<const TrainingExample> batch, double tau) {
  if (batch.empty()) throw ContractError("kd_loss: empty batch");
  double acc = 0.0;
  for (const TrainingExample& ex : batch) {
    check_example(predictor, ex);
    const auto log_t = log_softmax(ex.logits, tau);
    const auto log_s = log_softmax(predictor.logits(ex.hidden), tau);
    acc += kl(log_t, log_s);
  }
  return tau * tau * acc;
}

double cand_loss(const EarlyExitPredictor& predictor,
                 std::span<const TrainingExample> batch, double tau) {
  if (batch.empty()) throw ContractError("cand_loss: empty batch");
  double acc = 0.0;
  for (const TrainingExample& ex : batch) {
    check_example(predictor, ex);
    if (ex.candidates.empty()) throw ContractError("cand_loss: empty candidate set");
    const auto log_t = log_softmax(gather(ex.logits, ex.candidates), tau);
    const auto log_s =
        log_softmax(gather(predictor.logits(ex.hidden), ex.candidates), tau);
    acc += kl(log_t, log_s);
  }
  return tau * tau * acc;
}

double total_loss(const EarlyExitPredictor& predictor,
                  std::span<const TrainingExample> batch,
                  const TrainConfig& config) {
  return kd_loss(predictor, batch, config.tau_kd) +
         config.lambda_cand * cand_loss(predictor, batch, config.tau_cand);
}

Matrix loss_gradient(const EarlyExitPredictor& predictor,
                     std::span<const TrainingExample> batch,
                     const TrainConfig& config) {
  Matrix grad(predictor.vocab_size(), predictor.hidden_dim(), 0.0);
  for (const TrainingExample& ex : batch) {
    check_example(predictor, ex);
    const auto student = predictor.logits(ex.hidden);

    // d/ds_j of tau^2 KL(p || softmax(s / tau)) is tau (q_j - p_j).
    const auto p = softmax(ex.logits, config.tau_kd);
    const auto q = softmax(student, config.tau_kd);
    for (int j = 0; j < predictor.vocab_size(); ++j) {
      const double g = config.tau_kd * (q[j] - p[j]);
      auto row = grad.row(j);
      for (std::size_t i = 0; i < row.size(); ++i) row[i] += g * ex.hidden[i];
    }

    if (config.lambda_cand == 0.0) continue;
    const auto pc = softmax(gather(ex.logits, ex.candidates), config.tau_cand);
    const auto qc = softmax(gather(student, ex.candidates), config.tau_cand);
    for (std::size_t c = 0; c < ex.candidates.size(); ++c) {
      const double g =
          config.lambda_cand * config.tau_cand * (qc[c] - pc[c]);
      auto row = grad.row(ex.candidates[c]);
      for (std::size_t i = 0; i < row.size(); ++i) row[i] += g * ex.hidden[i];
    }
  }
  return grad;
}

TrainResult train(EarlyExitPredictor initial,
                  std::span<const TrainingExample> dataset,
                  const TrainConfig& config) {
  validate(config);
  if (dataset.empty()) throw ContractError("train: empty dataset");

  TrainResult out{std::move(initial), 0.0, {}};
  EarlyExitPredictor& pred = out.predictor;
  const double n = static_cast<double>(dataset.size());
  out.initial_loss = total_loss(pred, dataset, config) / n;

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TrainingExample> batch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);

      const Matrix grad = loss_gradient(pred, batch, config);
      const double step = config.learning_rate / static_cast<double>(batch.size());
      auto w = pred.weights().data();
      const auto g = grad.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] -= step * g[i];
        if (!std::isfinite(w[i])) {
          std::ostringstream msg;
          msg << "predictor training diverged at epoch " << epoch
              << ", batch starting at " << start << " (non-finite weight)";
          throw TrainingDivergence(msg.str());
        }
      }
    }
    const double loss = total_loss(pred, dataset, config) / n;
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "predictor training diverged at epoch " << epoch
          << ": loss is " << loss;
      throw TrainingDivergence(msg.str());
    }
    out.loss_curve.push_back(loss);
  }
  return out;
}

std::vector<TrainingExample> generate_dataset(const LayeredTargetModel& target,
                                              const ProbModel& draft, int layer,
                                              const DatasetSpec& spec) {
  if (layer < 1 || layer >= target.num_layers()) {
    throw ConfigError("early-exit layer must lie in [1, D)");
  }
  if (spec.count < 1 || spec.prefix_length < 1) {
    throw ConfigError("dataset count and prefix length must be >= 1");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<TokenId> token(0, target.vocab_size() - 1);
  std::vector<TrainingExample> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  std::vector<TokenId> prefix(static_cast<std::size_t>(spec.prefix_length));
  for (int i = 0; i < spec.count; ++i) {
    for (TokenId& t : prefix) t = token(rng);
    TrainingExample ex;
    std::vector<double> h = target.embed(prefix);
    for (int l = 1; l <= target.num_layers(); ++l) {
      target.apply_layer(l, h);
      if (l == layer) ex.hidden = h;
    }
    ex.logits = target.project(h);
    const CandidateSet cands = draft_candidates(draft, prefix, spec.candidates);
    for (const Candidate& c : cands.entries()) {
      ex.candidates.push_back(c.token);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

double candidate_agreement(const EarlyExitPredictor& predictor,
                           std::span<const TrainingExample> examples) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const TrainingExample& ex : examples) {
    check_example(predictor, ex);
    const auto student = predictor.logits(ex.hidden);
    if (top_candidate(student, ex.candidates) ==
        top_candidate(ex.logits, ex.candidates)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

}  // namespace flashspec
