// Copyright 2026 The nmslope Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nmslope/model.hpp"

namespace nmslope {

// Synthetic least-squares data: targets come from a fixed random teacher
// network y = V tanh(U x) plus Gaussian noise; inputs are standard normal.
struct RegressionSpec {
  std::size_t d_in = 32;
  std::size_t d_out = 16;
  std::size_t teacher_hidden = 32;
  double noise = 0.01;
  std::uint64_t seed = 0;
};

class RegressionTask {
 public:
  explicit RegressionTask(const RegressionSpec& spec);

  // Batch number `stream`; the same stream always yields the same batch.
  template <typename T>
  Batch<T> Sample(std::uint64_t stream, std::size_t rows) const;

  const RegressionSpec& spec() const { return spec_; }

 private:
  RegressionSpec spec_;
  MatrixD teacher_in_;   // teacher_hidden x d_in
  MatrixD teacher_out_;  // d_out x teacher_hidden
};

enum class Split { kTrain, kValidation };

// Character-level corpus: the vocabulary is the sorted set of bytes in the
// file; the last `validation_fraction` of the text is held out.
class CharCorpus {
 public:
  static CharCorpus Load(const std::string& path, double validation_fraction = 0.1);
  static CharCorpus FromText(const std::string& text, double validation_fraction = 0.1);

  std::size_t vocab_size() const { return alphabet_.size(); }
  const std::string& alphabet() const { return alphabet_; }
  const std::vector<std::uint32_t>& tokens(Split split) const { return split == Split::kTrain ? train_ : validation_; }

  // `sequences` windows of length + 1 tokens at offsets drawn from Rng(seed, stream).
  template <typename T>
  Batch<T> Sample(Split split, std::uint64_t seed, std::uint64_t stream, std::size_t sequences,
                  std::size_t length) const;

 private:
  std::string alphabet_;
  std::vector<std::uint32_t> train_;
  std::vector<std::uint32_t> validation_;
};

}  // namespace nmslope
