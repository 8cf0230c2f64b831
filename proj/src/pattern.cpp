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

#include "nmslope/pattern.hpp"

#include <array>
#include <bit>
#include <charconv>

#include "nmslope/errors.hpp"

namespace nmslope {

namespace {

using PascalTable = std::array<std::array<std::uint64_t, NmPattern::kMaxGroup + 1>, NmPattern::kMaxGroup + 1>;

const PascalTable& Pascal() {
  static const PascalTable table = [] {
    PascalTable t{};
    for (int i = 0; i <= NmPattern::kMaxGroup; ++i) {
      t[i][0] = 1;
      for (int j = 1; j <= i; ++j) t[i][j] = t[i - 1][j - 1] + (j <= i - 1 ? t[i - 1][j] : 0);
    }
    return t;
  }();
  return table;
}

bool ParseCount(std::string_view s, int& out) {
  if (s.empty() || s.size() > 2) return false;
  if (s.size() > 1 && s.front() == '0') return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

NmPattern::NmPattern(int n, int m) : n_(n), m_(m) {
  if (m < 1 || m > kMaxGroup || n < 1 || n > m) {
    throw InvalidArgument("invalid N:M pattern " + std::to_string(n) + ":" + std::to_string(m) +
                          " (need 1 <= N <= M <= 64)");
  }
}

NmPattern NmPattern::Parse(std::string_view text) {
  const auto colon = text.find(':');
  int n = 0;
  int m = 0;
  if (colon == std::string_view::npos || !ParseCount(text.substr(0, colon), n) ||
      !ParseCount(text.substr(colon + 1), m)) {
    throw InvalidArgument("malformed pattern '" + std::string(text) + "', expected N:M");
  }
  return NmPattern(n, m);
}

std::string NmPattern::ToString() const { return std::to_string(n_) + ":" + std::to_string(m_); }

std::uint64_t Binomial(int m, int k) {
  if (m < 0 || m > NmPattern::kMaxGroup || k < 0 || k > m) return 0;
  return Pascal()[m][k];
}

int IndexBits(const NmPattern& pattern) {
  const std::uint64_t count = Binomial(pattern.m(), pattern.n());
  return static_cast<int>(std::bit_width(count - 1));
}

std::uint64_t RankCombination(std::span<const int> sorted_indices, int m) {
  const int n = static_cast<int>(sorted_indices.size());
  std::uint64_t rank = 0;
  int prev = 0;
  for (int i = 0; i < n; ++i) {
    const int c = sorted_indices[i];
    if (c < prev || c >= m) throw InvalidArgument("combination indices must be strictly ascending in [0, m)");
    for (int j = prev; j < c; ++j) rank += Binomial(m - 1 - j, n - 1 - i);
    prev = c + 1;
  }
  return rank;
}

void UnrankCombination(std::uint64_t code, int n, int m, std::span<int> out) {
  if (code >= Binomial(m, n)) throw InvalidArgument("combination code out of range");
  int j = 0;
  for (int i = 0; i < n; ++i) {
    for (;;) {
      const std::uint64_t block = Binomial(m - 1 - j, n - 1 - i);
      if (code < block) break;
      code -= block;
      ++j;
    }
    out[i] = j++;
  }
}

bool CombinationTable::Fits(const NmPattern& pattern) {
  return Binomial(pattern.m(), pattern.n()) <= kMaxEntries;
}

CombinationTable::CombinationTable(const NmPattern& pattern)
    : n_(pattern.n()), count_(Binomial(pattern.m(), pattern.n())) {
  if (!Fits(pattern)) throw InvalidArgument("combination table too large for " + pattern.ToString());
  slots_.resize(count_ * n_);
  for (std::uint64_t code = 0; code < count_; ++code) {
    UnrankCombination(code, n_, pattern.m(), std::span<int>(slots_).subspan(code * n_, n_));
  }
}

std::span<const int> CombinationTable::indices(std::uint64_t code) const {
  return std::span<const int>(slots_).subspan(code * n_, n_);
}

}  // namespace nmslope
