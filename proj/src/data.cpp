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

#include "nmslope/data.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace nmslope {

namespace {

// Streams at or above this offset are reserved for the teacher weights.
constexpr std::uint64_t kTeacherStream = 1ull << 62;

}  // namespace

RegressionTask::RegressionTask(const RegressionSpec& spec) : spec_(spec) {
  if (spec.d_in == 0 || spec.d_out == 0 || spec.teacher_hidden == 0) throw ConfigError("data: empty regression shape");
  Rng a = Rng::ForStream(spec.seed, kTeacherStream);
  Rng b = Rng::ForStream(spec.seed, kTeacherStream + 1);
  teacher_in_ = MatrixD::RandomNormal(spec.teacher_hidden, spec.d_in, a, 1.0 / std::sqrt(static_cast<double>(spec.d_in)));
  teacher_out_ = MatrixD::RandomNormal(spec.d_out, spec.teacher_hidden, b, 1.0);
}

template <typename T>
Batch<T> RegressionTask::Sample(std::uint64_t stream, std::size_t rows) const {
  Rng rng = Rng::ForStream(spec_.seed, stream);
  const MatrixD x = MatrixD::RandomNormal(rows, spec_.d_in, rng);
  MatrixD h = MatMulTransB(x, teacher_in_);
  for (double& v : h.values()) v = std::tanh(v);
  MatrixD y = MatMulTransB(h, teacher_out_);
  for (double& v : y.values()) v += spec_.noise * rng.Normal();
  Batch<T> batch;
  batch.inputs = x.Cast<T>();
  batch.targets = y.Cast<T>();
  return batch;
}

CharCorpus CharCorpus::Load(const std::string& path, double validation_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("failed reading corpus '" + path + "'");
  return FromText(text.str(), validation_fraction);
}

CharCorpus CharCorpus::FromText(const std::string& text, double validation_fraction) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("data.validation_fraction must be in (0, 1)");
  std::array<bool, 256> seen{};
  for (unsigned char c : text) seen[c] = true;
  CharCorpus corpus;
  std::array<std::uint32_t, 256> id{};
  for (int c = 0; c < 256; ++c)
    if (seen[c]) {
      id[c] = static_cast<std::uint32_t>(corpus.alphabet_.size());
      corpus.alphabet_.push_back(static_cast<char>(c));
    }
  const auto split = static_cast<std::size_t>(std::floor(static_cast<double>(text.size()) * (1.0 - validation_fraction)));
  for (std::size_t i = 0; i < text.size(); ++i)
    (i < split ? corpus.train_ : corpus.validation_).push_back(id[static_cast<unsigned char>(text[i])]);
  return corpus;
}

template <typename T>
Batch<T> CharCorpus::Sample(Split split, std::uint64_t seed, std::uint64_t stream, std::size_t sequences,
                            std::size_t length) const {
  const auto& source = tokens(split);
  if (source.size() < length + 2) throw ConfigError("data: corpus split shorter than one training window");
  Rng rng = Rng::ForStream(seed, stream);
  Batch<T> batch;
  batch.sequences = sequences;
  batch.length = length;
  batch.tokens.reserve(sequences * (length + 1));
  for (std::size_t s = 0; s < sequences; ++s) {
    const std::size_t offset = rng.Below(source.size() - length);
    batch.tokens.insert(batch.tokens.end(), source.begin() + offset, source.begin() + offset + length + 1);
  }
  return batch;
}

template Batch<float> RegressionTask::Sample(std::uint64_t, std::size_t) const;
template Batch<double> RegressionTask::Sample(std::uint64_t, std::size_t) const;
template Batch<float> CharCorpus::Sample(Split, std::uint64_t, std::uint64_t, std::size_t, std::size_t) const;
template Batch<double> CharCorpus::Sample(Split, std::uint64_t, std::uint64_t, std::size_t, std::size_t) const;

}  // namespace nmslope
