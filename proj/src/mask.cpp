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

#include "nmslope/mask.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "nmslope/rng.hpp"

namespace nmslope {

namespace {

// Count kept entries of the group starting at `first`, stepping by `stride`.
std::size_t GroupCount(const std::vector<std::uint8_t>& keep, std::size_t first, std::size_t stride, int m) {
  std::size_t count = 0;
  for (int j = 0; j < m; ++j) count += keep[first + j * stride] != 0;
  return count;
}

void CheckGroups(const std::vector<std::uint8_t>& keep, std::size_t rows, std::size_t cols, const NmPattern& p,
                 bool along_rows, bool exact) {
  const auto n = static_cast<std::size_t>(p.n());
  const std::size_t m = p.m();
  if (along_rows) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t g = 0; g < cols; g += m) {
        const std::size_t c = GroupCount(keep, r * cols + g, 1, p.m());
        if (exact ? c != n : c > n) {
          throw InvalidArgument("mask row " + std::to_string(r) + " group at column " + std::to_string(g) +
                                " keeps " + std::to_string(c) + " entries under " + p.ToString());
        }
      }
  } else {
    for (std::size_t g = 0; g < rows; g += m)
      for (std::size_t col = 0; col < cols; ++col) {
        const std::size_t c = GroupCount(keep, g * cols + col, cols, p.m());
        if (exact ? c != n : c > n) {
          throw InvalidArgument("mask column " + std::to_string(col) + " group at row " + std::to_string(g) +
                                " keeps " + std::to_string(c) + " entries under " + p.ToString());
        }
      }
  }
}

// Stable insertion sort; groups are at most 64 long.
template <typename It, typename Greater>
void StableSortSmall(It first, It last, Greater greater) {
  for (It i = first; i != last; ++i) {
    auto v = *i;
    It j = i;
    while (j != first && greater(v, *(j - 1))) {
      *j = *(j - 1);
      --j;
    }
    *j = v;
  }
}

// Indices 0..m-1 ordered by descending magnitude, ties to the lower index.
template <typename T>
void RankByMagnitude(std::span<const T> group, std::span<int> order) {
  std::iota(order.begin(), order.end(), 0);
  StableSortSmall(order.begin(), order.end(), [&](int a, int b) { return std::abs(group[a]) > std::abs(group[b]); });
}

}  // namespace

void RequireDivisible(std::size_t extent, const NmPattern& pattern, const char* what) {
  if (extent % static_cast<std::size_t>(pattern.m()) != 0) {
    throw DivisibilityError(std::string(what) + ": extent " + std::to_string(extent) +
                            " is not divisible by group size " + std::to_string(pattern.m()));
  }
}

NmMask::NmMask(std::size_t rows, std::size_t cols, NmPattern pattern, Grouping grouping,
               std::vector<std::uint8_t> keep)
    : rows_(rows), cols_(cols), pattern_(pattern), grouping_(grouping), keep_(std::move(keep)) {
  if (keep_.size() != rows_ * cols_) throw ShapeError("NmMask: keep size does not match shape");
  for (auto& k : keep_) k = k != 0;
  switch (grouping_) {
    case Grouping::kRowWise:
      RequireDivisible(cols_, pattern_, "NmMask columns");
      CheckGroups(keep_, rows_, cols_, pattern_, true, true);
      break;
    case Grouping::kColumnWise:
      RequireDivisible(rows_, pattern_, "NmMask rows");
      CheckGroups(keep_, rows_, cols_, pattern_, false, true);
      break;
    case Grouping::kBoth:
      RequireDivisible(cols_, pattern_, "NmMask columns");
      RequireDivisible(rows_, pattern_, "NmMask rows");
      CheckGroups(keep_, rows_, cols_, pattern_, true, false);
      CheckGroups(keep_, rows_, cols_, pattern_, false, false);
      break;
  }
}

NmMask NmMask::Full(std::size_t rows, std::size_t cols, NmPattern pattern) {
  if (!pattern.is_dense()) throw InvalidArgument("NmMask::Full requires n == m");
  return NmMask(rows, cols, pattern, Grouping::kRowWise, std::vector<std::uint8_t>(rows * cols, 1));
}

std::size_t NmMask::kept_count() const { return static_cast<std::size_t>(std::count(keep_.begin(), keep_.end(), 1)); }

double NmMask::density() const {
  return keep_.empty() ? 0.0 : static_cast<double>(kept_count()) / static_cast<double>(keep_.size());
}

NmMask NmMask::Transposed() const {
  std::vector<std::uint8_t> t(keep_.size());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t[c * rows_ + r] = keep_[r * cols_ + c];
  Grouping g = grouping_;
  if (g == Grouping::kRowWise) g = Grouping::kColumnWise;
  else if (g == Grouping::kColumnWise) g = Grouping::kRowWise;
  return NmMask(cols_, rows_, pattern_, g, std::move(t));
}

bool NmMask::IsSubsetOf(const NmMask& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) return false;
  for (std::size_t i = 0; i < keep_.size(); ++i)
    if (keep_[i] && !other.keep_[i]) return false;
  return true;
}

bool NmMask::IsTransposable() const {
  const auto m = static_cast<std::size_t>(pattern_.m());
  if (rows_ % m != 0 || cols_ % m != 0) return false;
  try {
    CheckGroups(keep_, rows_, cols_, pattern_, true, false);
    CheckGroups(keep_, rows_, cols_, pattern_, false, false);
  } catch (const InvalidArgument&) {
    return false;
  }
  return true;
}

void NmMask::RequireShape(std::size_t rows, std::size_t cols) const {
  if (rows != rows_ || cols != cols_) {
    throw ShapeError("mask is " + std::to_string(rows_) + "x" + std::to_string(cols_) + ", operand is " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

NmMask RandomMask(std::size_t rows, std::size_t cols, const NmPattern& pattern, std::uint64_t seed) {
  RequireDivisible(cols, pattern, "RandomMask");
  Rng rng(seed);
  const int n = pattern.n();
  const int m = pattern.m();
  const std::uint64_t combos = Binomial(m, n);
  std::vector<std::uint8_t> keep(rows * cols, 0);
  std::vector<int> picked(n);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t g = 0; g < cols; g += m) {
      UnrankCombination(rng.Below(combos), n, m, picked);
      for (int idx : picked) keep[r * cols + g + idx] = 1;
    }
  }
  return NmMask(rows, cols, pattern, Grouping::kRowWise, std::move(keep));
}

template <typename T>
NmMask MagnitudeMask(const DenseMatrix<T>& dense, const NmPattern& pattern) {
  RequireDivisible(dense.cols(), pattern, "MagnitudeMask");
  const int m = pattern.m();
  std::vector<std::uint8_t> keep(dense.size(), 0);
  std::vector<int> order(m);
  for (std::size_t r = 0; r < dense.rows(); ++r) {
    for (std::size_t g = 0; g < dense.cols(); g += m) {
      RankByMagnitude<T>(dense.row(r).subspan(g, m), order);
      for (int j = 0; j < pattern.n(); ++j) keep[r * dense.cols() + g + order[j]] = 1;
    }
  }
  return NmMask(dense.rows(), dense.cols(), pattern, Grouping::kRowWise, std::move(keep));
}

template <typename T>
NmMask DoublePrune(const DenseMatrix<T>& dense, const NmMask& row_mask, const NmPattern& pattern) {
  row_mask.RequireShape(dense.rows(), dense.cols());
  RequireDivisible(dense.cols(), pattern, "DoublePrune columns");
  RequireDivisible(dense.rows(), pattern, "DoublePrune rows");
  const std::size_t rows = dense.rows();
  const std::size_t cols = dense.cols();
  const int m = pattern.m();
  const int n = pattern.n();
  std::vector<std::uint8_t> keep(row_mask.keep().begin(), row_mask.keep().end());
  std::vector<int> survivors;
  survivors.reserve(m);
  for (std::size_t g = 0; g < rows; g += m) {
    for (std::size_t c = 0; c < cols; ++c) {
      survivors.clear();
      for (int j = 0; j < m; ++j)
        if (keep[(g + j) * cols + c]) survivors.push_back(j);
      if (static_cast<int>(survivors.size()) <= n) continue;
      // survivors is ascending in row index, so a stable sort keeps the
      // lower row first among equal magnitudes.
      StableSortSmall(survivors.begin(), survivors.end(), [&](int a, int b) {
        return std::abs(dense(g + a, c)) > std::abs(dense(g + b, c));
      });
      for (std::size_t k = n; k < survivors.size(); ++k) keep[(g + survivors[k]) * cols + c] = 0;
    }
  }
  return NmMask(rows, cols, pattern, Grouping::kBoth, std::move(keep));
}

double MaskDifference(const NmMask& a, const NmMask& b) {
  a.RequireShape(b.rows(), b.cols());
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.keep().size(); ++i) diff += a.keep()[i] != b.keep()[i];
  return a.keep().empty() ? 0.0 : static_cast<double>(diff) / static_cast<double>(a.keep().size());
}

template NmMask MagnitudeMask(const DenseMatrix<float>&, const NmPattern&);
template NmMask MagnitudeMask(const DenseMatrix<double>&, const NmPattern&);
template NmMask DoublePrune(const DenseMatrix<float>&, const NmMask&, const NmPattern&);
template NmMask DoublePrune(const DenseMatrix<double>&, const NmMask&, const NmPattern&);

}  // namespace nmslope
