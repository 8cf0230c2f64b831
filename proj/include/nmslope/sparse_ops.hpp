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
#include <utility>
#include <vector>

#include "nmslope/compressed.hpp"
#include "nmslope/dense_matrix.hpp"
#include "nmslope/mask.hpp"

namespace nmslope {

// Low-rank adapter factors for a d_out x d_in weight: W + up * down, with
// up (L) d_out x r and down (R) r x d_in. The down-projection is applied to
// the input first. Rank 0 means no adapter.
template <typename T>
struct AdapterPair {
  DenseMatrix<T> up;    // d_out x r
  DenseMatrix<T> down;  // r x d_in

  AdapterPair() = default;
  AdapterPair(DenseMatrix<T> up_factor, DenseMatrix<T> down_factor);

  static AdapterPair Empty(std::size_t d_out, std::size_t d_in) {
    return AdapterPair(DenseMatrix<T>(d_out, 0), DenseMatrix<T>(0, d_in));
  }

  std::size_t rank() const { return up.cols(); }
  std::size_t d_out() const { return up.rows(); }
  std::size_t d_in() const { return down.cols(); }
};

// Y = X * decompress(W)^T for X b x k and W d_out x k packed along k.
// Each output element sums its groups in ascending order and the values of
// a group in storage order, so results do not depend on threading.
template <typename T>
DenseMatrix<T> Spmm(const DenseMatrix<T>& x, const NmCompressed<T>& w);

// beta * A + gamma * B for operands sharing shape, pattern and codes.
// Throws PatternMismatchError otherwise.
template <typename T>
NmCompressed<T> SparseAdd(const NmCompressed<T>& a, const NmCompressed<T>& b, T beta, T gamma);

// Packs exactly the entries of `grad` selected by `mask`.
template <typename T>
NmCompressed<T> PruneAndCompress(const DenseMatrix<T>& grad, const NmMask& mask);

// Same result, reusing the slot layout of `like` (which must store every
// kept entry of `mask`) instead of re-deriving codes from the mask.
template <typename T>
NmCompressed<T> PruneAndCompress(const DenseMatrix<T>& grad, const NmMask& mask, const NmCompressed<T>& like);

// Overwrites the stored values of `w` from `w_new` at the stored slots;
// codes are left untouched.
template <typename T>
void UpdateSparseValues(NmCompressed<T>& w, const DenseMatrix<T>& w_new);

// Row-block tiling of a d_out x d_in weight. Upsample weights
// (d_out = c * d_in) split into c square d_in x d_in tiles; weights with
// d_out <= d_in are left as a single tile.
struct TilePlan {
  std::size_t tile_rows = 0;
  std::size_t tile_cols = 0;
  std::vector<std::pair<std::size_t, std::size_t>> tiles;  // (row_offset, col_offset)
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t tile_side() const { return tile_rows; }
  bool square() const { return tile_rows == tile_cols; }
};

TilePlan PlanSquareTiles(std::size_t d_out, std::size_t d_in, const NmPattern& pattern);

// Cuts a packed weight into the row blocks of `plan`.
template <typename T>
std::vector<NmCompressed<T>> SplitTiles(const NmCompressed<T>& w, const TilePlan& plan);

// Multiplies X by each tile and writes the results side by side.
template <typename T>
DenseMatrix<T> TiledSpmm(const DenseMatrix<T>& x, const std::vector<NmCompressed<T>>& tiles, const TilePlan& plan);

// Y = X * (decompress(W) + up * down)^T. One traversal of X produces both
// Y1 = X W^T and Y2 = X down^T, then Y = Y2 up^T + Y1.
template <typename T>
DenseMatrix<T> FusedSparseLowRankForward(const DenseMatrix<T>& x, const NmCompressed<T>& w,
                                         const AdapterPair<T>& adapters);

}  // namespace nmslope
