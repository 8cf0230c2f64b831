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
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nmslope/dense_matrix.hpp"
#include "nmslope/mask.hpp"
#include "nmslope/pattern.hpp"

namespace nmslope {

// Packed N:M matrix. Groups run along each row (the reduction dimension of
// X * W^T). Every group stores exactly n values, in ascending column order,
// plus the lexicographic rank of its n-subset of column offsets. A group
// whose mask keeps fewer than n entries is padded with the lowest unused
// offsets holding explicit zeros.
template <typename T>
class NmCompressed {
 public:
  NmCompressed(std::size_t rows, std::size_t cols, NmPattern pattern, std::vector<T> values,
               std::vector<std::uint64_t> codes);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const NmPattern& pattern() const { return pattern_; }
  std::size_t groups_per_row() const { return cols_ / pattern_.m(); }
  std::size_t group_count() const { return codes_.size(); }
  std::size_t nnz() const { return values_.size(); }

  std::span<const T> values() const { return values_; }
  std::span<const std::uint64_t> codes() const { return codes_; }

  // In-place value access; codes are never mutable.
  std::span<T> mutable_values() { return values_; }

  // Column index of every stored value, in storage order (decoded once at
  // construction).
  const std::vector<std::uint32_t>& DecodeColumns() const { return columns_; }

  bool SameStructure(const NmCompressed& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && pattern_ == other.pattern_ && codes_ == other.codes_;
  }

  friend bool operator==(const NmCompressed&, const NmCompressed&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  NmPattern pattern_;
  std::vector<T> values_;
  std::vector<std::uint64_t> codes_;
  std::vector<std::uint32_t> columns_;
};

// Packs dense ⊙ mask. The mask must have at most n kept per row group
// (row-wise or double-pruned grouping); throws ShapeError on mismatch.
template <typename T>
NmCompressed<T> Compress(const DenseMatrix<T>& dense, const NmMask& mask);

template <typename T>
DenseMatrix<T> Decompress(const NmCompressed<T>& packed);

// The 0/1 mask of stored slots (including zero padding slots).
template <typename T>
NmMask StoredSlots(const NmCompressed<T>& packed);

// Binary "NMC1" encoding, see docs/nmc1_format.md.
enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

template <typename T>
constexpr DType DTypeOf();
template <>
constexpr DType DTypeOf<float>() { return DType::kFloat32; }
template <>
constexpr DType DTypeOf<double>() { return DType::kFloat64; }

template <typename T>
void WriteNmc1(std::ostream& out, const NmCompressed<T>& packed);

// Throws IoError on a malformed stream or a dtype other than T's.
template <typename T>
NmCompressed<T> ReadNmc1(std::istream& in);

template <typename T>
void SaveNmc1(const std::string& path, const NmCompressed<T>& packed);
template <typename T>
NmCompressed<T> LoadNmc1(const std::string& path);

}  // namespace nmslope
