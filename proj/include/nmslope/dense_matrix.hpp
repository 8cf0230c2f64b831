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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nmslope/errors.hpp"
#include "nmslope/rng.hpp"
#include "nmslope/simd.hpp"

namespace nmslope {

// Row-major dense matrix. Holds activations, gradients and dense weights.
template <typename T>
class DenseMatrix {
 public:
  using value_type = T;

  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) throw ShapeError("DenseMatrix: data size does not match shape");
  }

  static DenseMatrix Zeros(std::size_t rows, std::size_t cols) { return DenseMatrix(rows, cols); }

  static DenseMatrix Identity(std::size_t n) {
    DenseMatrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = T(1);
    return out;
  }

  static DenseMatrix RandomNormal(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
    DenseMatrix out(rows, cols);
    for (auto& v : out.data_) v = static_cast<T>(stddev * rng.Normal());
    return out;
  }

  static DenseMatrix RandomUniform(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
    DenseMatrix out(rows, cols);
    for (auto& v : out.data_) v = static_cast<T>(rng.Uniform(lo, hi));
    return out;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * cols_, cols_); }
  std::span<const T> row(std::size_t r) const { return std::span<const T>(data_).subspan(r * cols_, cols_); }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool AllFinite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  // Throws NonFiniteError naming `what` if any entry is NaN or infinite.
  void RequireFinite(const char* what) const {
    if (!AllFinite()) throw NonFiniteError(std::string(what) + ": non-finite entry");
  }

  void Fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  DenseMatrix<U> Cast() const {
    DenseMatrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.values()[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
inline void RequireSameShape(const DenseMatrix<T>& a, const DenseMatrix<T>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

template <typename T>
DenseMatrix<T> Transpose(const DenseMatrix<T>& a) {
  constexpr std::size_t kTile = 16;
  DenseMatrix<T> out(a.cols(), a.rows());
  const T* src = a.values().data();
  T* dst = out.values().data();
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile)
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t r1 = std::min(rows, r0 + kTile);
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
    }
  return out;
}

namespace detail {

// C (m x n) = A (m x k) * B (k x n), all row-major with the given strides.
// Every output element starts at zero and accumulates over k in ascending
// order; the blocking below only changes which elements are in flight.
template <typename T>
void Gemm(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, std::size_t m,
          std::size_t n, std::size_t k) {
  using V = Vector<T>;
  using Vec = typename V::type;
  constexpr std::size_t kRows = 6;
  constexpr std::size_t kVecs = 2;
  constexpr std::size_t kCols = kVecs * V::kLanes;
  // Depth of one pass over B; the running sums are parked in C between
  // passes, which keeps the per-element order of additions unchanged.
  constexpr std::size_t kDepth = 128;
  const std::size_t m_main = m - m % kRows;
  const std::size_t n_main = n - n % kCols;
  if (k == 0) {
    for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T(0));
    return;
  }
  // Each B panel is copied to contiguous storage first: with power-of-two
  // row strides the rows of an unpacked panel collide in the same cache sets.
  std::vector<T> panel(kDepth * kCols);
  for (std::size_t p0 = 0; p0 < k; p0 += kDepth) {
    const std::size_t p1 = std::min(k, p0 + kDepth);
    for (std::size_t j = 0; j < n_main; j += kCols) {
      for (std::size_t p = p0; p < p1; ++p) std::copy_n(b + p * ldb + j, kCols, panel.data() + (p - p0) * kCols);
      for (std::size_t i = 0; i < m_main; i += kRows) {
        Vec acc[kRows][kVecs] = {};
        if (p0 > 0)
          for (std::size_t r = 0; r < kRows; ++r)
            for (std::size_t v = 0; v < kVecs; ++v) acc[r][v] = V::Load(c + (i + r) * ldc + j + v * V::kLanes);
        for (std::size_t p = p0; p < p1; ++p) {
          Vec bv[kVecs];
          for (std::size_t v = 0; v < kVecs; ++v) bv[v] = V::Load(panel.data() + (p - p0) * kCols + v * V::kLanes);
          for (std::size_t r = 0; r < kRows; ++r) {
            const T av = a[(i + r) * lda + p];
            for (std::size_t v = 0; v < kVecs; ++v) acc[r][v] += av * bv[v];
          }
        }
        for (std::size_t r = 0; r < kRows; ++r)
          for (std::size_t v = 0; v < kVecs; ++v) V::Store(c + (i + r) * ldc + j + v * V::kLanes, acc[r][v]);
      }
    }
  }
  for (std::size_t i = 0; i < m_main; ++i)
    for (std::size_t jj = n_main; jj < n; ++jj) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * lda + p] * b[p * ldb + jj];
      c[i * ldc + jj] = acc;
    }
  for (std::size_t i = m_main; i < m; ++i) {
    T* out = c + i * ldc;
    for (std::size_t jj = 0; jj < n; ++jj) out[jj] = 0;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * lda + p];
      const T* brow = b + p * ldb;
      for (std::size_t jj = 0; jj < n; ++jj) out[jj] += av * brow[jj];
    }
  }
}

}  // namespace detail

// C = A * B. Each output element accumulates over the shared index in
// ascending order, starting from zero.
template <typename T>
DenseMatrix<T> MatMul(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
  if (a.cols() != b.rows()) throw ShapeError("MatMul: inner dimensions differ");
  DenseMatrix<T> c(a.rows(), b.cols());
  if (c.empty()) return c;
  detail::Gemm(a.values().data(), a.cols(), b.values().data(), b.cols(), c.values().data(), c.cols(), a.rows(),
               b.cols(), a.cols());
  return c;
}

// C = A * B^T, same accumulation order as MatMul.
template <typename T>
DenseMatrix<T> MatMulTransB(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
  if (a.cols() != b.cols()) throw ShapeError("MatMulTransB: inner dimensions differ");
  return MatMul(a, Transpose(b));
}

// C = A^T * B, same accumulation order as MatMul.
template <typename T>
DenseMatrix<T> MatMulTransA(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
  if (a.rows() != b.rows()) throw ShapeError("MatMulTransA: inner dimensions differ");
  return MatMul(Transpose(a), b);
}

template <typename T>
void AddInPlace(DenseMatrix<T>& a, const DenseMatrix<T>& b, T scale = T(1)) {
  RequireSameShape(a, b, "AddInPlace");
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += scale * bv[i];
}

template <typename T>
void AddRowVector(DenseMatrix<T>& a, std::span<const T> v) {
  if (v.size() != a.cols()) throw ShapeError("AddRowVector: length mismatch");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    T* row = a.row(r).data();
    for (std::size_t c = 0; c < a.cols(); ++c) row[c] += v[c];
  }
}

// Column sums, accumulated in row order.
template <typename T>
std::vector<T> ColumnSums(const DenseMatrix<T>& a) {
  std::vector<T> out(a.cols(), T(0));
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const T* row = a.row(r).data();
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += row[c];
  }
  return out;
}

template <typename T>
double FrobeniusNorm(const DenseMatrix<T>& a) {
  double s = 0.0;
  for (T v : a.values()) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

// ||a - b||_F / max(||b||_F, tiny); b is the reference.
template <typename T, typename U>
double RelativeError(const DenseMatrix<T>& a, const DenseMatrix<U>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("RelativeError: shape mismatch");
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i]);
    diff += d * d;
    ref += static_cast<double>(b.values()[i]) * static_cast<double>(b.values()[i]);
  }
  if (ref == 0.0) return std::sqrt(diff);
  return std::sqrt(diff / ref);
}

template <typename T>
double MaxAbs(const DenseMatrix<T>& a) {
  double m = 0.0;
  for (T v : a.values()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

using MatrixF = DenseMatrix<float>;
using MatrixD = DenseMatrix<double>;

}  // namespace nmslope
