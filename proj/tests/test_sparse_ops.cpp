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

#include "doctest.h"
#include "nmslope/errors.hpp"
#include "nmslope/sparse_ops.hpp"
#include "oracles.hpp"

using namespace nmslope;

namespace {

NmMask IdentityMask(std::size_t n, NmPattern p) {
  std::vector<std::uint8_t> keep(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) keep[i * n + i] = 1;
  return NmMask(n, n, p, Grouping::kBoth, keep);
}

template <typename T>
NmCompressed<T> RandomPacked(std::size_t rows, std::size_t cols, NmPattern p, Rng& rng) {
  const auto d = DenseMatrix<T>::RandomNormal(rows, cols, rng);
  return Compress(d, RandomMask(rows, cols, p, rng.Next()));
}

}  // namespace

TEST_CASE("spmm with a sparse identity returns X") {
  Rng rng(1);
  const auto x = MatrixF::RandomNormal(5, 8, rng);
  const auto eye = Compress(MatrixF::Identity(8), IdentityMask(8, NmPattern(2, 4)));
  CHECK(Spmm(x, eye) == x);
}

TEST_CASE("spmm hand example") {
  MatrixF x(1, 4, std::vector<float>{1, 2, 3, 4});
  MatrixF w(1, 4, std::vector<float>{0, 10, 0, -1});
  const NmMask mask(1, 4, NmPattern(2, 4), Grouping::kRowWise, {0, 1, 0, 1});
  const auto y = Spmm(x, Compress(w, mask));
  REQUIRE(y.rows() == 1);
  REQUIRE(y.cols() == 1);
  CHECK(y(0, 0) == 16.0f);
}

TEST_CASE("spmm matches the dense oracle") {
  Rng rng(42);
  for (int t = 0; t < 100; ++t) {
    const NmPattern p = std::vector<NmPattern>{{2, 4}, {1, 2}, {2, 8}, {4, 8}, {1, 4}}[t % 5];
    const std::size_t b = 1 + rng.Below(33);
    const std::size_t k = p.m() * (1 + rng.Below(12));
    const std::size_t d_out = 1 + rng.Below(40);
    const auto x = MatrixF::RandomNormal(b, k, rng);
    const auto w = RandomPacked<float>(d_out, k, p, rng);
    CHECK(RelativeError(Spmm(x, w), oracle::MatMulNT(x, Decompress(w))) <= 1e-5);
    const auto xd = x.Cast<double>();
    const auto wd = Compress(Decompress(w).Cast<double>(), StoredSlots(w));
    CHECK(RelativeError(Spmm(xd, wd), oracle::MatMulNT(xd, Decompress(wd))) <= 1e-12);
  }
}

TEST_CASE("spmm errors") {
  Rng rng(2);
  const auto w = RandomPacked<float>(4, 8, NmPattern(2, 4), rng);
  CHECK_THROWS_AS(Spmm(MatrixF(3, 4), w), ShapeError);
  MatrixF bad(2, 8);
  bad(1, 3) = std::nanf("");
  CHECK_THROWS_AS(Spmm(bad, w), NonFiniteError);
}

TEST_CASE("sparse add") {
  Rng rng(3);
  const NmPattern p(2, 4);
  const auto mask = RandomMask(8, 16, p, 4);
  const auto a = Compress(MatrixD::RandomNormal(8, 16, rng), mask);
  const auto b = Compress(MatrixD::RandomNormal(8, 16, rng), mask);
  CHECK(SparseAdd(a, b, 1.0, 0.0) == a);
  // Algorithm degenerate case: 1/gamma = 1, alpha = 0.
  CHECK(SparseAdd(a, b, 1.0 / 1.0, 0.0) == a);
  const auto sum = SparseAdd(a, b, 0.5, -2.0);
  CHECK(std::equal(sum.codes().begin(), sum.codes().end(), a.codes().begin()));
  const auto da = Decompress(a);
  const auto db = Decompress(b);
  const auto ds = Decompress(sum);
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(ds.values()[i] == 0.5 * da.values()[i] + -2.0 * db.values()[i]);
  const auto other = Compress(MatrixD::RandomNormal(8, 16, rng), RandomMask(8, 16, p, 5));
  CHECK_THROWS_AS(SparseAdd(a, other, 1.0, 1.0), PatternMismatchError);
}

TEST_CASE("prune and compress") {
  Rng rng(4);
  const auto g = MatrixF::RandomNormal(8, 8, rng);
  CHECK(Decompress(PruneAndCompress(g, NmMask::Full(8, 8, NmPattern(4, 4)))) == g);
  const auto mask = RandomMask(8, 8, NmPattern(2, 4), 1);
  const auto zero = PruneAndCompress(MatrixF(8, 8), mask);
  for (float v : zero.values()) CHECK(v == 0.0f);
  CHECK(Decompress(PruneAndCompress(g, mask)) == mask.Apply(g));
  CHECK_THROWS_AS(PruneAndCompress(MatrixF(8, 4), mask), ShapeError);
}

TEST_CASE("prune and compress onto an existing layout") {
  Rng rng(5);
  for (const char* text : {"1:2", "2:4", "2:8", "3:8"}) {
    const NmPattern p = NmPattern::Parse(text);
    const auto mask = RandomMask(16, 32, p, rng.Next());
    const auto like = Compress(MatrixD::RandomNormal(16, 32, rng), mask);
    const auto g = MatrixD::RandomNormal(16, 32, rng);
    CHECK(PruneAndCompress(g, mask, like) == PruneAndCompress(g, mask));
  }
  // Slots of `like` outside the mask hold zeros.
  const auto mask = RandomMask(8, 8, NmPattern(2, 4), 2);
  const auto full = Compress(MatrixF::RandomNormal(8, 8, rng), RandomMask(8, 8, NmPattern(2, 4), 3));
  const auto g = MatrixF::RandomNormal(8, 8, rng);
  CHECK(Decompress(PruneAndCompress(g, mask, full)) == StoredSlots(full).Apply(mask.Apply(g)));
  CHECK_THROWS_AS(PruneAndCompress(g, mask, Compress(g, RandomMask(8, 8, NmPattern(1, 4), 4))), PatternMismatchError);
}

TEST_CASE("update sparse values keeps codes") {
  Rng rng(5);
  const auto mask = RandomMask(8, 16, NmPattern(2, 4), 3);
  auto w = Compress(MatrixF::RandomNormal(8, 16, rng), mask);
  const auto before = w;
  UpdateSparseValues(w, Decompress(w));
  CHECK(w == before);
  auto twice = Decompress(w);
  for (auto& v : twice.values()) v *= 2;
  UpdateSparseValues(w, twice);
  CHECK(std::equal(w.codes().begin(), w.codes().end(), before.codes().begin()));
  for (std::size_t i = 0; i < w.nnz(); ++i) CHECK(w.values()[i] == 2 * before.values()[i]);
  const auto fresh = MatrixF::RandomNormal(8, 16, rng);
  UpdateSparseValues(w, fresh);
  CHECK(Decompress(w) == mask.Apply(fresh));
  CHECK_THROWS_AS(UpdateSparseValues(w, MatrixF(8, 8)), ShapeError);
}

TEST_CASE("square tile plans") {
  const NmPattern p(2, 4);
  auto plan = PlanSquareTiles(4096, 1024, p);
  CHECK(plan.tiles.size() == 4);
  CHECK(plan.tile_side() == 1024);
  CHECK(plan.square());
  CHECK(PlanSquareTiles(1024, 1024, p).tiles.size() == 1);
  plan = PlanSquareTiles(8192, 1024, p);
  REQUIRE(plan.tiles.size() == 8);
  for (std::size_t t = 0; t < 8; ++t) {
    CHECK(plan.tiles[t].first == 1024 * t);
    CHECK(plan.tiles[t].second == 0);
  }
  plan = PlanSquareTiles(256, 1024, p);
  CHECK(plan.tiles.size() == 1);
  CHECK_FALSE(plan.square());
  CHECK_THROWS_AS(PlanSquareTiles(3000, 1024, p), ShapeError);
  CHECK_THROWS_AS(PlanSquareTiles(4096, 1022, p), DivisibilityError);
}

TEST_CASE("tiled spmm equals untiled spmm") {
  Rng rng(6);
  const NmPattern p(2, 4);
  const auto x = MatrixF::RandomNormal(7, 32, rng);
  const auto w1 = RandomPacked<float>(32, 32, p, rng);
  const auto plan1 = PlanSquareTiles(32, 32, p);
  CHECK(TiledSpmm(x, SplitTiles(w1, plan1), plan1) == Spmm(x, w1));
  const auto w4 = RandomPacked<float>(128, 32, p, rng);
  const auto plan4 = PlanSquareTiles(128, 32, p);
  const auto tiled = TiledSpmm(x, SplitTiles(w4, plan4), plan4);
  CHECK(RelativeError(tiled, oracle::MatMulNT(x, Decompress(w4))) <= 1e-6);
  CHECK(tiled == Spmm(x, w4));
  const auto zero = TiledSpmm(MatrixF(3, 32), SplitTiles(w4, plan4), plan4);
  for (float v : zero.values()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(TiledSpmm(x, SplitTiles(w1, plan1), plan4), ShapeError);
}

TEST_CASE("fused sparse + low-rank forward") {
  Rng rng(7);
  const NmPattern p(2, 4);
  const auto x = MatrixF::RandomNormal(8, 32, rng);
  const auto w = RandomPacked<float>(32, 32, p, rng);
  CHECK(FusedSparseLowRankForward(x, w, AdapterPair<float>::Empty(32, 32)) == Spmm(x, w));
  AdapterPair<float> zero_up(MatrixF(32, 4), MatrixF::RandomNormal(4, 32, rng));
  CHECK(FusedSparseLowRankForward(x, w, zero_up) == Spmm(x, w));

  AdapterPair<float> ad(MatrixF::RandomNormal(32, 4, rng), MatrixF::RandomNormal(4, 32, rng));
  const auto fused = FusedSparseLowRankForward(x, w, ad);
  auto effective = Decompress(w).Cast<double>();
  AddInPlace(effective, oracle::MatMulNN(ad.up, ad.down));
  CHECK(RelativeError(fused, oracle::MatMulNT(x.Cast<double>(), effective)) <= 1e-5);

  // Unfused three-step schedule.
  auto unfused = MatMulTransB(MatMulTransB(x, ad.down), ad.up);
  AddInPlace(unfused, Spmm(x, w));
  CHECK(RelativeError(fused, unfused) <= 1e-6);

  AdapterPair<float> wrong(MatrixF(16, 2), MatrixF(2, 32));
  CHECK_THROWS_AS(FusedSparseLowRankForward(x, w, wrong), ShapeError);
  CHECK_THROWS_AS(AdapterPair<float>(MatrixF(4, 8), MatrixF(8, 4)), ShapeError);
}
