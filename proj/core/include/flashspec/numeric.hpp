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
#include <span>
#include <vector>

namespace flashspec {

// Dense row-major matrix. Only what the models and the predictor need.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int r, int c) { return data_[index(r, c)]; }
  double operator()(int r, int c) const { return data_[index(r, c)]; }

  std::span<double> row(int r);
  std::span<const double> row(int r) const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Left-to-right summation; callers rely on the fixed order for bitwise
// reproducibility between batched and per-row evaluation.
double dot(std::span<const double> a, std::span<const double> b);

// out = m * x
std::vector<double> matvec(const Matrix& m, std::span<const double> x);

// Numerically stabilized softmax of logits / temperature.
std::vector<double> softmax(std::span<const double> logits,
                            double temperature = 1.0);

// log(softmax(logits / temperature)) via log-sum-exp.
std::vector<double> log_softmax(std::span<const double> logits,
                                double temperature = 1.0);

// Index of the largest entry; ties go to the smallest index.
std::size_t argmax(std::span<const double> values);

// 64-bit FNV-1a over raw bytes. Stable across platforms, used for stamps.
std::uint64_t fnv1a64(std::span<const char> bytes);

// SplitMix64 finalizer, used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace flashspec
