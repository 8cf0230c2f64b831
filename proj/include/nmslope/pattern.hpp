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
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nmslope {

// An N:M scheme: every group of m consecutive elements keeps n of them.
class NmPattern {
 public:
  static constexpr int kMaxGroup = 64;

  // Throws InvalidArgument unless 1 <= n <= m <= 64.
  NmPattern(int n, int m);

  // Parses "N:M" strictly (no whitespace, no sign, no leading zeros).
  static NmPattern Parse(std::string_view text);

  int n() const { return n_; }
  int m() const { return m_; }
  double density() const { return static_cast<double>(n_) / m_; }
  bool is_dense() const { return n_ == m_; }
  std::string ToString() const;

  friend bool operator==(const NmPattern&, const NmPattern&) = default;

 private:
  int n_;
  int m_;
};

// C(m, k) for m <= 64; exact in 64 bits.
std::uint64_t Binomial(int m, int k);

// ceil(log2(C(m, n))): bits needed to name one kept-index combination.
int IndexBits(const NmPattern& pattern);

// Lexicographic rank of a sorted n-subset of {0, .., m-1}.
std::uint64_t RankCombination(std::span<const int> sorted_indices, int m);

// Inverse of RankCombination; writes n ascending indices into out.
void UnrankCombination(std::uint64_t code, int n, int m, std::span<int> out);

// Every combination of the pattern unranked, row-major [code][slot].
// Only practical for small C(m, n); used by kernels to skip per-call unranking.
class CombinationTable {
 public:
  explicit CombinationTable(const NmPattern& pattern);

  std::uint64_t size() const { return count_; }
  std::span<const int> indices(std::uint64_t code) const;

  // Tables above this many combinations are not materialised.
  static constexpr std::uint64_t kMaxEntries = 1u << 16;
  static bool Fits(const NmPattern& pattern);

 private:
  int n_;
  std::uint64_t count_;
  std::vector<int> slots_;
};

}  // namespace nmslope
