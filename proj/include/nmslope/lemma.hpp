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

#include "nmslope/pattern.hpp"

namespace nmslope {

// Expected drop in density when a uniformly random row-wise N:M matrix is
// additionally pruned N:M along columns:
//   sum_{j=n+1}^{m} C(m,j) s^j (1-s)^(m-j) (j-n)/m,  s = n/m.
double ImposedSparsityAnalytic(const NmPattern& pattern);

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t trials = 0;
};

// Averages density(row mask) - density(double-pruned mask) over `trials`
// side x side Gaussian matrices with random row-wise masks. Trial t draws
// from its own stream of `seed`, so the estimate is reproducible.
MonteCarloEstimate ImposedSparsityMonteCarlo(const NmPattern& pattern, std::size_t side_len, std::size_t trials,
                                             std::uint64_t seed);

}  // namespace nmslope
