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

#include "nmslope/compressed.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>

namespace nmslope {

namespace {

constexpr char kMagic[4] = {'N', 'M', 'C', '1'};

void PutLe(std::ostream& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t GetLe(std::istream& in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw IoError("NMC1: unexpected end of stream");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

template <typename T>
std::uint64_t ToBits(T v) {
  if constexpr (sizeof(T) == 4) return std::bit_cast<std::uint32_t>(v);
  else return std::bit_cast<std::uint64_t>(v);
}

template <typename T>
T FromBits(std::uint64_t bits) {
  if constexpr (sizeof(T) == 4) return std::bit_cast<float>(static_cast<std::uint32_t>(bits));
  else return std::bit_cast<double>(bits);
}

std::vector<std::uint32_t> DecodeColumnIndices(std::span<const std::uint64_t> codes, const NmPattern& pattern,
                                               std::size_t gpr) {
  const int n = pattern.n();
  const int m = pattern.m();
  std::vector<std::uint32_t> columns(codes.size() * n);
  std::vector<int> offsets(n);
  std::optional<CombinationTable> table;
  if (CombinationTable::Fits(pattern)) table.emplace(pattern);
  for (std::size_t gi = 0; gi < codes.size(); ++gi) {
    std::span<const int> idx;
    if (table) {
      idx = table->indices(codes[gi]);
    } else {
      UnrankCombination(codes[gi], n, m, offsets);
      idx = offsets;
    }
    const std::size_t base = (gi % gpr) * m;
    for (int j = 0; j < n; ++j) columns[gi * n + j] = static_cast<std::uint32_t>(base + idx[j]);
  }
  return columns;
}

}  // namespace

template <typename T>
NmCompressed<T>::NmCompressed(std::size_t rows, std::size_t cols, NmPattern pattern, std::vector<T> values,
                              std::vector<std::uint64_t> codes)
    : rows_(rows), cols_(cols), pattern_(pattern), values_(std::move(values)), codes_(std::move(codes)) {
  RequireDivisible(cols_, pattern_, "NmCompressed columns");
  const std::size_t groups = rows_ * groups_per_row();
  if (codes_.size() != groups) throw ShapeError("NmCompressed: code count does not match shape");
  if (values_.size() != groups * pattern_.n()) throw ShapeError("NmCompressed: value count does not match shape");
  const std::uint64_t limit = Binomial(pattern_.m(), pattern_.n());
  for (auto code : codes_)
    if (code >= limit) throw InvalidArgument("NmCompressed: code out of range for " + pattern_.ToString());
  columns_ = DecodeColumnIndices(codes_, pattern_, groups_per_row());
}


template <typename T>
NmCompressed<T> Compress(const DenseMatrix<T>& dense, const NmMask& mask) {
  mask.RequireShape(dense.rows(), dense.cols());
  const NmPattern& p = mask.pattern();
  if (mask.grouping() == Grouping::kColumnWise) {
    throw ShapeError("Compress: mask is grouped column-wise; transpose it first");
  }
  const int n = p.n();
  const int m = p.m();
  const std::size_t gpr = dense.cols() / m;
  std::vector<T> values;
  std::vector<std::uint64_t> codes;
  values.reserve(dense.rows() * gpr * n);
  codes.reserve(dense.rows() * gpr);
  std::vector<int> slots;
  slots.reserve(m);
  for (std::size_t r = 0; r < dense.rows(); ++r) {
    for (std::size_t g = 0; g < gpr; ++g) {
      slots.clear();
      const std::size_t base = g * m;
      for (int j = 0; j < m; ++j)
        if (mask.kept(r, base + j)) slots.push_back(j);
      for (int j = 0; j < m && static_cast<int>(slots.size()) < n; ++j)
        if (!mask.kept(r, base + j)) slots.push_back(j);
      std::sort(slots.begin(), slots.end());
      codes.push_back(RankCombination(slots, m));
      for (int j : slots) values.push_back(mask.kept(r, base + j) ? dense(r, base + j) : T(0));
    }
  }
  return NmCompressed<T>(dense.rows(), dense.cols(), p, std::move(values), std::move(codes));
}

template <typename T>
DenseMatrix<T> Decompress(const NmCompressed<T>& packed) {
  DenseMatrix<T> out(packed.rows(), packed.cols());
  const auto& columns = packed.DecodeColumns();
  const std::size_t per_row = packed.groups_per_row() * packed.pattern().n();
  for (std::size_t i = 0; i < columns.size(); ++i) out(i / per_row, columns[i]) = packed.values()[i];
  return out;
}

template <typename T>
NmMask StoredSlots(const NmCompressed<T>& packed) {
  std::vector<std::uint8_t> keep(packed.rows() * packed.cols(), 0);
  const auto& columns = packed.DecodeColumns();
  const std::size_t per_row = packed.groups_per_row() * packed.pattern().n();
  for (std::size_t i = 0; i < columns.size(); ++i) keep[(i / per_row) * packed.cols() + columns[i]] = 1;
  return NmMask(packed.rows(), packed.cols(), packed.pattern(), Grouping::kRowWise, std::move(keep));
}

template <typename T>
void WriteNmc1(std::ostream& out, const NmCompressed<T>& packed) {
  out.write(kMagic, 4);
  PutLe(out, packed.rows(), 8);
  PutLe(out, packed.cols(), 8);
  PutLe(out, static_cast<std::uint64_t>(packed.pattern().n()), 1);
  PutLe(out, static_cast<std::uint64_t>(packed.pattern().m()), 1);
  PutLe(out, static_cast<std::uint64_t>(DTypeOf<T>()), 1);

  const int bits = IndexBits(packed.pattern());
  const std::size_t gpr = packed.groups_per_row();
  const std::size_t row_bytes = (gpr * bits + 7) / 8;
  std::vector<std::uint8_t> row(row_bytes);
  for (std::size_t r = 0; r < packed.rows(); ++r) {
    std::fill(row.begin(), row.end(), 0);
    std::size_t bitpos = 0;
    for (std::size_t g = 0; g < gpr; ++g) {
      const std::uint64_t code = packed.codes()[r * gpr + g];
      for (int b = 0; b < bits; ++b, ++bitpos)
        if ((code >> b) & 1u) row[bitpos / 8] |= static_cast<std::uint8_t>(1u << (bitpos % 8));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  for (T v : packed.values()) PutLe(out, ToBits(v), sizeof(T));
  if (!out) throw IoError("NMC1: write failed");
}

template <typename T>
NmCompressed<T> ReadNmc1(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw IoError("NMC1: bad magic");
  const std::uint64_t rows = GetLe(in, 8);
  const std::uint64_t cols = GetLe(in, 8);
  const auto n = static_cast<int>(GetLe(in, 1));
  const auto m = static_cast<int>(GetLe(in, 1));
  const auto dtype = static_cast<DType>(GetLe(in, 1));
  if (dtype != DTypeOf<T>()) throw IoError("NMC1: dtype tag does not match requested type");
  NmPattern pattern = [&] {
    try {
      return NmPattern(n, m);
    } catch (const InvalidArgument& e) {
      throw IoError(std::string("NMC1: ") + e.what());
    }
  }();
  if (cols % m != 0) throw IoError("NMC1: columns not divisible by m");
  const int bits = IndexBits(pattern);
  const std::size_t gpr = cols / m;
  const std::size_t row_bytes = (gpr * bits + 7) / 8;
  std::vector<std::uint64_t> codes;
  codes.reserve(rows * gpr);
  std::vector<std::uint8_t> row(row_bytes);
  for (std::uint64_t r = 0; r < rows; ++r) {
    if (!in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_bytes)))
      throw IoError("NMC1: truncated code block");
    std::size_t bitpos = 0;
    for (std::size_t g = 0; g < gpr; ++g) {
      std::uint64_t code = 0;
      for (int b = 0; b < bits; ++b, ++bitpos)
        code |= static_cast<std::uint64_t>((row[bitpos / 8] >> (bitpos % 8)) & 1u) << b;
      codes.push_back(code);
    }
  }
  std::vector<T> values(rows * gpr * n);
  for (auto& v : values) v = FromBits<T>(GetLe(in, sizeof(T)));
  try {
    return NmCompressed<T>(rows, cols, pattern, std::move(values), std::move(codes));
  } catch (const Error& e) {
    throw IoError(std::string("NMC1: ") + e.what());
  }
}

template <typename T>
void SaveNmc1(const std::string& path, const NmCompressed<T>& packed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  WriteNmc1(out, packed);
  out.flush();
  if (!out) throw IoError("write to " + path + " failed");
}

template <typename T>
NmCompressed<T> LoadNmc1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return ReadNmc1<T>(in);
}

#define NMSLOPE_INSTANTIATE(T)                                                  \
  template class NmCompressed<T>;                                               \
  template NmCompressed<T> Compress(const DenseMatrix<T>&, const NmMask&);      \
  template DenseMatrix<T> Decompress(const NmCompressed<T>&);                   \
  template NmMask StoredSlots(const NmCompressed<T>&);                          \
  template void WriteNmc1(std::ostream&, const NmCompressed<T>&);               \
  template NmCompressed<T> ReadNmc1<T>(std::istream&);                          \
  template void SaveNmc1(const std::string&, const NmCompressed<T>&);           \
  template NmCompressed<T> LoadNmc1<T>(const std::string&);

NMSLOPE_INSTANTIATE(float)
NMSLOPE_INSTANTIATE(double)

#undef NMSLOPE_INSTANTIATE

}  // namespace nmslope
