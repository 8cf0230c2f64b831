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

#include "nmslope/lemma.hpp"

#include <cmath>

#include "nmslope/dense_matrix.hpp"
#include "nmslope/mask.hpp"
#include "nmslope/rng.hpp"

namespace nmslope {

double ImposedSparsityAnalytic(const NmPattern& pattern) {
  const int n = pattern.n();
  const int m = pattern.m();
  const double s = pattern.density();
  double total = 0.0;
  for (int j = n + 1; j <= m; ++j) {
    total += static_cast<double>(Binomial(m, j)) * std::pow(s, j) * std::pow(1.0 - s, m - j) *
             static_cast<double>(j - n) / m;
  }
  return total;
}

MonteCarloEstimate ImposedSparsityMonteCarlo(const NmPattern& pattern, std::size_t side_len, std::size_t trials,
                                             std::uint64_t seed) {
  RequireDivisible(side_len, pattern, "ImposedSparsityMonteCarlo");
  MonteCarloEstimate est;
  est.trials = trials;
  if (trials == 0) return est;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = Rng::ForStream(seed, t);
    const auto dense = MatrixD::RandomNormal(side_len, side_len, rng);
    const NmMask row_mask = RandomMask(side_len, side_len, pattern, rng.Next());
    const NmMask both = DoublePrune(dense, row_mask, pattern);
    const double drop = row_mask.density() - both.density();
    sum += drop;
    sum_sq += drop * drop;
  }
  const auto k = static_cast<double>(trials);
  est.mean = sum / k;
  if (trials > 1) {
    const double var = std::max(0.0, (sum_sq - k * est.mean * est.mean) / (k - 1.0));
    est.standard_error = std::sqrt(var / k);
  }
  return est;
}

}  // namespace nmslope
