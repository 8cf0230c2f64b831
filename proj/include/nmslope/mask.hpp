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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nmslope/dense_matrix.hpp"
#include "nmslope/pattern.hpp"

namespace nmslope {

// Which dimension the N:M groups run along.
enum class Grouping {
  kRowWise,     // m consecutive columns of one row; exactly n kept per group
  kColumnWise,  // m consecutive rows of one column; exactly n kept per group
  kBoth,        // double-pruned: at most n kept per group in both directions
};

// Keep/drop structure for one matrix. Immutable once built.
class NmMask {
 public:
  // Validates divisibility and the per-group counts implied by `grouping`.
  NmMask(std::size_t rows, std::size_t cols, NmPattern pattern, Grouping grouping, std::vector<std::uint8_t> keep);

  // All-kept row-wise mask for a degenerate n == m pattern.
  static NmMask Full(std::size_t rows, std::size_t cols, NmPattern pattern);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const NmPattern& pattern() const { return pattern_; }
  Grouping grouping() const { return grouping_; }

  bool kept(std::size_t r, std::size_t c) const { return keep_[r * cols_ + c] != 0; }
  std::span<const std::uint8_t> keep() const { return keep_; }

  std::size_t kept_count() const;
  double density() const;

  // Transpose; row-wise and column-wise groupings swap.
  NmMask Transposed() const;

  // True when every kept position of this mask is kept in `other` (same shape).
  bool IsSubsetOf(const NmMask& other) const;

  // True when no group in either direction holds more than n kept entries.
  bool IsTransposable() const;

  template <typename T>
  DenseMatrix<T> Apply(const DenseMatrix<T>& dense) const {
    RequireShape(dense.rows(), dense.cols());
    DenseMatrix<T> out(rows_, cols_);
    for (std::size_t i = 0; i < keep_.size(); ++i) out.values()[i] = keep_[i] ? dense.values()[i] : T(0);
    return out;
  }

  void RequireShape(std::size_t rows, std::size_t cols) const;

  friend bool operator==(const NmMask&, const NmMask&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  NmPattern pattern_;
  Grouping grouping_;
  std::vector<std::uint8_t> keep_;
};

// Throws DivisibilityError unless `extent` is a multiple of the group size.
void RequireDivisible(std::size_t extent, const NmPattern& pattern, const char* what);

// Row-wise mask; each group's kept set is uniform over the C(m, n)
// combinations, drawn group by group in row-major order from Rng(seed).
NmMask RandomMask(std::size_t rows, std::size_t cols, const NmPattern& pattern, std::uint64_t seed);

// Row-wise mask keeping the n largest |value| per group; ties go to the
// lower column index.
template <typename T>
NmMask MagnitudeMask(const DenseMatrix<T>& dense, const NmPattern& pattern);

// Starting from dense ⊙ row_mask, keeps at most n surviving entries in every
// column-direction group (largest |value|, ties to the lower row index).
// The result is a subset of row_mask with grouping kBoth.
template <typename T>
NmMask DoublePrune(const DenseMatrix<T>& dense, const NmMask& row_mask, const NmPattern& pattern);

// Fraction of positions where two equally shaped masks disagree.
double MaskDifference(const NmMask& a, const NmMask& b);

}  // namespace nmslope
