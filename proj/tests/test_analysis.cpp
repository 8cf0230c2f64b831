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

#include <cmath>

#include "doctest.h"
#include "nmslope/analysis.hpp"
#include "nmslope/errors.hpp"
#include "nmslope/rng.hpp"

using namespace nmslope;

TEST_CASE("estimator check with a zero weight is exact") {
  Rng rng(1);
  const auto r = EstimatorCheck(MatrixD(8, 8), MatrixD::RandomNormal(1, 8, rng), NmPattern(2, 4), 10, 3);
  CHECK(r.bernoulli.relative_error == 0.0);
  CHECK(r.bernoulli.max_abs_error == 0.0);
  CHECK(r.structured.max_abs_error == 0.0);
}

TEST_CASE("estimator check with a degenerate dense pattern is exact after one sample") {
  Rng rng(2);
  const auto w = MatrixD::RandomNormal(16, 16, rng);
  const auto r = EstimatorCheck(w, MatrixD::RandomNormal(2, 16, rng), NmPattern(4, 4), 1, 3);
  CHECK(r.bernoulli.relative_error <= 1e-6);
  CHECK(r.structured.relative_error <= 1e-6);
}

TEST_CASE("Bernoulli estimator converges at the Monte Carlo rate") {
  Rng rng(3);
  const auto w = MatrixD::RandomNormal(64, 64, rng);
  const auto dy = MatrixD::RandomNormal(1, 64, rng);
  const auto few = EstimatorCheck(w, dy, NmPattern(2, 4), 100, 11);
  const auto many = EstimatorCheck(w, dy, NmPattern(2, 4), 10000, 11);
  CHECK(many.bernoulli.relative_error < few.bernoulli.relative_error);
  CHECK(many.bernoulli.beyond_4se == 0);
  CHECK(many.bernoulli.max_z <= 4.0);
  std::vector<double> counts, errors;
  for (std::size_t n : {100, 316, 1000, 3162, 10000}) {
    counts.push_back(static_cast<double>(n));
    errors.push_back(EstimatorCheck(w, dy, NmPattern(2, 4), n, 100 + n).bernoulli.relative_error);
  }
  const double slope = LogLogSlope(counts, errors);
  CHECK(slope >= -0.7);
  CHECK(slope <= -0.3);
}

TEST_CASE("estimator check rejects mismatched shapes") {
  CHECK_THROWS_AS(EstimatorCheck(MatrixD(8, 8), MatrixD(1, 4), NmPattern(2, 4), 1, 0), ShapeError);
}

TEST_CASE("log-log slope of an exact power law") {
  CHECK(LogLogSlope({1, 10, 100}, {1, 0.1, 0.01}) == doctest::Approx(-1.0));
  CHECK(LogLogSlope({4, 16}, {2, 4}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(LogLogSlope({1}, {1}), InvalidArgument);
}

TEST_CASE("training memory with the default bit listing") {
  const auto m = TrainingMemory(BitBudget{}, NmPattern(2, 4));
  // Two copies of (2 x 16 value bits + 3 index bits), 4 byte-stored mask
  // entries, 2 x 16 gradient bits, 2 x 2 x 32 optimizer bits, over
  // 4 x (16 + 16) + 4 x 2 x 32 dense bits.
  CHECK(m.weights == 70.0);
  CHECK(m.mask == 32.0);
  CHECK(m.gradients == 32.0);
  CHECK(m.optimizer == 128.0);
  CHECK(m.dense_total == 384.0);
  CHECK(m.ratio == 262.0 / 384.0);
  CHECK(m.ratio >= 0.60);
  CHECK(m.ratio <= 0.72);
}

TEST_CASE("training memory special cases") {
  BitBudget plain;
  plain.store_transpose = false;
  plain.include_mask = false;
  CHECK(TrainingMemoryRatio(plain, NmPattern(4, 4)) == 1.0);  // C(4,4) = 1 needs no index bits
  BitBudget stateless;
  stateless.optimizer_states = 0;
  CHECK(TrainingMemoryRatio(stateless, NmPattern(2, 4)) == (70.0 + 32.0 + 32.0) / 128.0);
  BitBudget one_bit;
  one_bit.mask_bits = 1;
  CHECK(TrainingMemoryRatio(one_bit, NmPattern(2, 4)) == 234.0 / 384.0);
  CHECK(TrainingMemoryRatio(BitBudget{}, NmPattern(2, 4)) == TrainingMemoryRatio(BitBudget{}, NmPattern(2, 4)));
}

TEST_CASE("inference memory") {
  CHECK(InferenceMemoryRatio(NmPattern(2, 4), 1024, 1024, 0) == 35.0 / 64.0);
  CHECK(InferenceMemoryRatio(NmPattern(4, 4), 1024, 1024, 0) == 1.0);
  CHECK(InferenceMemoryRatio(NmPattern(2, 4), 1024, 1024, 64) == doctest::Approx(0.671875).epsilon(1e-15));
  double prev = 0.0;
  for (std::size_t r : {0, 1, 8, 64, 512}) {
    const double v = InferenceMemoryRatio(NmPattern(2, 4), 1024, 1024, r);
    CHECK(v > prev);
    prev = v;
  }
  CHECK(InferenceMemoryRatio(NmPattern(1, 4), 256, 256, 4) < InferenceMemoryRatio(NmPattern(2, 4), 256, 256, 4));
  CHECK(InferenceMemoryRatio(NmPattern(2, 4), 256, 256, 4) < InferenceMemoryRatio(NmPattern(3, 4), 256, 256, 4));
  CHECK_THROWS_AS(InferenceMemoryRatio(NmPattern(2, 4), 16, 32, 17), InvalidArgument);
}

TEST_CASE("flop model") {
  CHECK(FlopModel(64, 128, 128, NmPattern(2, 4), 0).ratio == 0.5);
  CHECK(FlopModel(64, 128, 128, NmPattern(4, 4), 0).ratio == 1.0);
  CHECK(FlopModel(64, 128, 256, NmPattern(1, 8), 0).ratio == 0.125);
  const auto f = FlopModel(2048, 4096, 4096, NmPattern(2, 4), 64);
  CHECK(f.ratio == 0.53125);
  CHECK(f.dense_flops == 2048.0 * 4096 * 4096);
  CHECK(f.adapter_flops == 2048.0 * 8192 * 64);
  CHECK(f.adapter_intensity < f.dense_intensity);
  CHECK(f.sparse_intensity > 0.0);
}

TEST_CASE("whole-model memory adds the dense remainder") {
  const std::vector<LayerFootprint> layers{{128, 512, true, NmPattern(2, 4)}, {128, 128, false, NmPattern(1, 1)}};
  const auto r = ModelTrainingMemory(layers, BitBudget{}, 1000.0);
  CHECK(r.dense_bits == doctest::Approx(96.0 * (128 * 512 + 128 * 128) + 1000.0));
  CHECK(r.sparse_bits == doctest::Approx(262.0 / 4 * 128 * 512 + 96.0 * 128 * 128 + 1000.0));
}

TEST_CASE("adapter cosine series") {
  Rng rng(4);
  const auto a = MatrixD::RandomNormal(2, 8, rng);
  CHECK(AdapterCosineSeries({{a}}, {a})[0] == doctest::Approx(1.0));
  const MatrixD e1(1, 2, std::vector<double>{1, 0});
  const MatrixD e2(1, 2, std::vector<double>{0, 3});
  CHECK(CosineSimilarity(e1, e2) == 0.0);
  CHECK(AdapterCosineSeries({{e1, e1}, {e2, e1}}, {e1, e1}) == std::vector<double>{1.0, 0.5});
  CHECK(CosineSimilarity(MatrixD(1, 2), e1) == 0.0);
  CHECK_THROWS_AS(AdapterCosineSeries({{MatrixD(3, 8)}}, {a}), ShapeError);
  CHECK_THROWS_AS(AdapterCosineSeries({}, {a}), InvalidArgument);
}

TEST_CASE("mask change series") {
  const NmMask a(1, 4, NmPattern(2, 4), Grouping::kRowWise, {1, 1, 0, 0});
  const NmMask b(1, 4, NmPattern(2, 4), Grouping::kRowWise, {1, 0, 1, 0});
  const NmMask c(1, 4, NmPattern(2, 4), Grouping::kRowWise, {0, 0, 1, 1});
  std::vector<MaskSnapshot> log{MaskSnapshot({&c, &a}), MaskSnapshot({&b, &a}), MaskSnapshot({&a, &a})};
  CHECK(MaskChangeSeries(log) == std::vector<double>{0.5, 0.25, 0.0});
  std::vector<MaskSnapshot> fixed(5, MaskSnapshot({&a}));
  for (double v : MaskChangeSeries(fixed)) CHECK(v == 0.0);
  CHECK_THROWS_AS(MaskChangeSeries({}), InvalidArgument);
  CHECK_THROWS_AS(log[0].Hamming(fixed[0]), ShapeError);
}

TEST_CASE("trailing smoothing window") {
  CHECK(Smooth({1, 2, 3, 4}, 2) == std::vector<double>{1, 1.5, 2.5, 3.5});
  CHECK(Smooth({5}, 10) == std::vector<double>{5});
}
