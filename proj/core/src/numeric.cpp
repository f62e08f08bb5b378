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

#include "flashspec/numeric.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "flashspec/error.hpp"

namespace flashspec {

Matrix::Matrix(int rows, int cols, double fill)
    : rows_(rows),
      cols_(cols),
      data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
            fill) {
  if (rows < 0 || cols < 0) throw ContractError("negative matrix dimension");
}

std::span<double> Matrix::row(int r) {
  assert(r >= 0 && r < rows_);
  return std::span<double>(data_).subspan(index(r, 0),
                                          static_cast<std::size_t>(cols_));
}

std::span<const double> Matrix::row(int r) const {
  assert(r >= 0 && r < rows_);
  return std::span<const double>(data_).subspan(
      index(r, 0), static_cast<std::size_t>(cols_));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("dot: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
  if (static_cast<std::size_t>(m.cols()) != x.size()) {
    throw ContractError("matvec: dimension mismatch");
  }
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (int r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), x);
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits,
                                double temperature) {
  if (logits.empty()) return {};
  if (!(temperature > 0.0)) throw ContractError("temperature must be > 0");
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : logits) hi = std::max(hi, v / temperature);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v / temperature - hi);
  const double lse = hi + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] / temperature - lse;
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits,
                            double temperature) {
  if (logits.empty()) return {};
  if (!(temperature > 0.0)) throw ContractError("temperature must be > 0");
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : logits) hi = std::max(hi, v / temperature);
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] / temperature - hi);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ContractError("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::uint64_t fnv1a64(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace flashspec
