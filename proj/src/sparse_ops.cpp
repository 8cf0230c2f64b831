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

#include "nmslope/sparse_ops.hpp"

#include <string>

#include "nmslope/parallel.hpp"

namespace nmslope {

namespace {

template <typename T>
void CheckSpmmShapes(const DenseMatrix<T>& x, const NmCompressed<T>& w, const char* what) {
  if (x.cols() != w.cols()) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(x.cols()) +
                     " columns, packed weight reduces over " + std::to_string(w.cols()));
  }
  x.RequireFinite(what);
}

// yt (rows x b) accumulates the sparse rows [row_begin, row_end) of w
// against xt (k x b).
template <typename T>
void SparseRowsTimesXt(const NmCompressed<T>& w, const std::vector<std::uint32_t>& columns,
                       const DenseMatrix<T>& xt, DenseMatrix<T>& yt, std::size_t row_begin, std::size_t row_end) {
  // Each output element accumulates its row's slots in storage order; rows
  // and batch columns are processed in register-sized blocks.
  using V = detail::Vector<T>;
  using Vec = typename V::type;
  constexpr std::size_t kRows = 4;
  constexpr std::size_t kVecs = 2;
  constexpr std::size_t kBatch = kVecs * V::kLanes;
  const std::size_t per_row = w.groups_per_row() * w.pattern().n();
  const std::size_t b = xt.cols();
  const T* vals = w.values().data();
  const T* x = xt.values().data();
  std::size_t o = row_begin;
  for (; o + kRows <= row_end; o += kRows) {
    std::size_t i = 0;
    for (; i + kBatch <= b; i += kBatch) {
      Vec acc[kRows][kVecs] = {};
      for (std::size_t s = 0; s < per_row; ++s)
        for (std::size_t r = 0; r < kRows; ++r) {
          const std::size_t slot = (o + r) * per_row + s;
          const T v = vals[slot];
          const T* xrow = x + columns[slot] * b + i;
          for (std::size_t k = 0; k < kVecs; ++k) acc[r][k] += v * V::Load(xrow + k * V::kLanes);
        }
      for (std::size_t r = 0; r < kRows; ++r)
        for (std::size_t k = 0; k < kVecs; ++k) V::Store(&yt(o + r, i + k * V::kLanes), acc[r][k]);
    }
    for (std::size_t r = 0; r < kRows; ++r)
      for (std::size_t ii = i; ii < b; ++ii) {
        T acc = 0;
        for (std::size_t s = (o + r) * per_row; s < (o + r + 1) * per_row; ++s) acc += vals[s] * x[columns[s] * b + ii];
        yt(o + r, ii) = acc;
      }
  }
  for (; o < row_end; ++o) {
    T* out = yt.row(o).data();
    for (std::size_t s = o * per_row; s < (o + 1) * per_row; ++s) {
      const T v = vals[s];
      const T* xrow = xt.row(columns[s]).data();
      for (std::size_t i = 0; i < b; ++i) out[i] += v * xrow[i];
    }
  }
}

template <typename T>
void RequireSameStructure(const NmCompressed<T>& a, const NmCompressed<T>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(what) + ": shape mismatch");
  if (!(a.pattern() == b.pattern()) || a.codes().size() != b.codes().size() ||
      !std::equal(a.codes().begin(), a.codes().end(), b.codes().begin())) {
    throw PatternMismatchError(std::string(what) + ": operands have different sparsity patterns");
  }
}

}  // namespace

template <typename T>
AdapterPair<T>::AdapterPair(DenseMatrix<T> up_factor, DenseMatrix<T> down_factor)
    : up(std::move(up_factor)), down(std::move(down_factor)) {
  if (up.cols() != down.rows()) throw ShapeError("AdapterPair: up and down ranks differ");
  if (rank() > std::min(up.rows(), down.cols())) throw ShapeError("AdapterPair: rank exceeds min(d_in, d_out)");
}

template <typename T>
DenseMatrix<T> Spmm(const DenseMatrix<T>& x, const NmCompressed<T>& w) {
  CheckSpmmShapes(x, w, "Spmm");
  const auto xt = Transpose(x);
  const auto& columns = w.DecodeColumns();
  DenseMatrix<T> yt(w.rows(), x.rows());
  ParallelFor(w.rows(), w.nnz() * x.rows(), [&](std::size_t begin, std::size_t end) {
    SparseRowsTimesXt(w, columns, xt, yt, begin, end);
  });
  return Transpose(yt);
}

template <typename T>
NmCompressed<T> SparseAdd(const NmCompressed<T>& a, const NmCompressed<T>& b, T beta, T gamma) {
  RequireSameStructure(a, b, "SparseAdd");
  NmCompressed<T> out = a;
  auto values = out.mutable_values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = beta * a.values()[i] + gamma * b.values()[i];
  return out;
}

template <typename T>
NmCompressed<T> PruneAndCompress(const DenseMatrix<T>& grad, const NmMask& mask) {
  mask.RequireShape(grad.rows(), grad.cols());
  return Compress(grad, mask);
}

template <typename T>
NmCompressed<T> PruneAndCompress(const DenseMatrix<T>& grad, const NmMask& mask, const NmCompressed<T>& like) {
  mask.RequireShape(grad.rows(), grad.cols());
  if (like.rows() != grad.rows() || like.cols() != grad.cols() || like.pattern() != mask.pattern())
    throw PatternMismatchError("PruneAndCompress: structure does not match the gradient and mask");
  NmCompressed<T> out = like;
  const auto& columns = like.DecodeColumns();
  const std::size_t per_row = like.groups_per_row() * like.pattern().n();
  auto vals = out.mutable_values();
  for (std::size_t s = 0; s < columns.size(); ++s) {
    const std::size_t r = s / per_row;
    vals[s] = mask.kept(r, columns[s]) ? grad(r, columns[s]) : T(0);
  }
  return out;
}

template <typename T>
void UpdateSparseValues(NmCompressed<T>& w, const DenseMatrix<T>& w_new) {
  if (w_new.rows() != w.rows() || w_new.cols() != w.cols()) throw ShapeError("UpdateSparseValues: shape mismatch");
  const auto& columns = w.DecodeColumns();
  const std::size_t per_row = w.groups_per_row() * w.pattern().n();
  auto vals = w.mutable_values();
  for (std::size_t s = 0; s < columns.size(); ++s) vals[s] = w_new(s / per_row, columns[s]);
}

TilePlan PlanSquareTiles(std::size_t d_out, std::size_t d_in, const NmPattern& pattern) {
  RequireDivisible(d_in, pattern, "PlanSquareTiles d_in");
  RequireDivisible(d_out, pattern, "PlanSquareTiles d_out");
  TilePlan plan;
  plan.rows = d_out;
  plan.cols = d_in;
  if (d_out <= d_in) {
    plan.tile_rows = d_out;
    plan.tile_cols = d_in;
    plan.tiles.emplace_back(0, 0);
    return plan;
  }
  if (d_out % d_in != 0) {
    throw ShapeError("PlanSquareTiles: d_out " + std::to_string(d_out) + " is not a multiple of d_in " +
                     std::to_string(d_in));
  }
  plan.tile_rows = d_in;
  plan.tile_cols = d_in;
  for (std::size_t off = 0; off < d_out; off += d_in) plan.tiles.emplace_back(off, 0);
  return plan;
}

template <typename T>
std::vector<NmCompressed<T>> SplitTiles(const NmCompressed<T>& w, const TilePlan& plan) {
  if (plan.rows != w.rows() || plan.cols != w.cols()) throw ShapeError("SplitTiles: plan does not match weight");
  const std::size_t gpr = w.groups_per_row();
  const std::size_t n = w.pattern().n();
  std::vector<NmCompressed<T>> tiles;
  tiles.reserve(plan.tiles.size());
  for (const auto& [row_off, col_off] : plan.tiles) {
    if (col_off != 0 || plan.tile_cols != w.cols()) throw ShapeError("SplitTiles: only full-width row tiles");
    const auto g0 = static_cast<std::ptrdiff_t>(row_off * gpr);
    const auto g1 = static_cast<std::ptrdiff_t>((row_off + plan.tile_rows) * gpr);
    std::vector<std::uint64_t> codes(w.codes().begin() + g0, w.codes().begin() + g1);
    std::vector<T> values(w.values().begin() + g0 * static_cast<std::ptrdiff_t>(n),
                          w.values().begin() + g1 * static_cast<std::ptrdiff_t>(n));
    tiles.emplace_back(plan.tile_rows, plan.tile_cols, w.pattern(), std::move(values), std::move(codes));
  }
  return tiles;
}

template <typename T>
DenseMatrix<T> TiledSpmm(const DenseMatrix<T>& x, const std::vector<NmCompressed<T>>& tiles, const TilePlan& plan) {
  if (tiles.size() != plan.tiles.size()) throw ShapeError("TiledSpmm: tile count does not match plan");
  DenseMatrix<T> y(x.rows(), plan.rows);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    if (tiles[t].rows() != plan.tile_rows || tiles[t].cols() != plan.tile_cols)
      throw ShapeError("TiledSpmm: tile shape does not match plan");
    const auto part = Spmm(x, tiles[t]);
    const std::size_t off = plan.tiles[t].first;
    for (std::size_t i = 0; i < x.rows(); ++i)
      std::copy(part.row(i).begin(), part.row(i).end(), y.row(i).begin() + static_cast<std::ptrdiff_t>(off));
  }
  return y;
}

template <typename T>
DenseMatrix<T> FusedSparseLowRankForward(const DenseMatrix<T>& x, const NmCompressed<T>& w,
                                         const AdapterPair<T>& adapters) {
  CheckSpmmShapes(x, w, "FusedSparseLowRankForward");
  const std::size_t r = adapters.rank();
  if (r > 0 && (adapters.d_out() != w.rows() || adapters.d_in() != w.cols()))
    throw ShapeError("FusedSparseLowRankForward: adapter shape does not match weight");
  const std::size_t b = x.rows();
  const std::size_t d_out = w.rows();
  const auto xt = Transpose(x);
  const auto& columns = w.DecodeColumns();

  // Rows [0, d_out) hold Y1^T, rows [d_out, d_out + r) hold Y2^T.
  DenseMatrix<T> ext(d_out + r, b);
  ParallelFor(d_out + r, (w.nnz() + r * w.cols()) * b, [&](std::size_t begin, std::size_t end) {
    if (begin < d_out) SparseRowsTimesXt(w, columns, xt, ext, begin, std::min(end, d_out));
    for (std::size_t j = std::max(begin, d_out); j < end; ++j) {
      T* out = ext.row(j).data();
      const T* down = adapters.down.row(j - d_out).data();
      for (std::size_t k = 0; k < w.cols(); ++k) {
        const T dk = down[k];
        const T* xrow = xt.row(k).data();
        for (std::size_t i = 0; i < b; ++i) out[i] += dk * xrow[i];
      }
    }
  });

  DenseMatrix<T> y(b, d_out);
  for (std::size_t i = 0; i < b; ++i) {
    T* yrow = y.row(i).data();
    for (std::size_t o = 0; o < d_out; ++o) {
      T acc = T(0);
      for (std::size_t j = 0; j < r; ++j) acc += ext(d_out + j, i) * adapters.up(o, j);
      yrow[o] = acc + ext(o, i);
    }
  }
  return y;
}

#define NMSLOPE_INSTANTIATE(T)                                                                                \
  template struct AdapterPair<T>;                                                                             \
  template DenseMatrix<T> Spmm(const DenseMatrix<T>&, const NmCompressed<T>&);                                \
  template NmCompressed<T> SparseAdd(const NmCompressed<T>&, const NmCompressed<T>&, T, T);                   \
  template NmCompressed<T> PruneAndCompress(const DenseMatrix<T>&, const NmMask&);                            \
  template NmCompressed<T> PruneAndCompress(const DenseMatrix<T>&, const NmMask&, const NmCompressed<T>&);    \
  template void UpdateSparseValues(NmCompressed<T>&, const DenseMatrix<T>&);                                  \
  template std::vector<NmCompressed<T>> SplitTiles(const NmCompressed<T>&, const TilePlan&);                  \
  template DenseMatrix<T> TiledSpmm(const DenseMatrix<T>&, const std::vector<NmCompressed<T>>&, const TilePlan&); \
  template DenseMatrix<T> FusedSparseLowRankForward(const DenseMatrix<T>&, const NmCompressed<T>&,            \
                                                    const AdapterPair<T>&);

NMSLOPE_INSTANTIATE(float)
NMSLOPE_INSTANTIATE(double)

#undef NMSLOPE_INSTANTIATE

}  // namespace nmslope
