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

#include <cstdint>
#include <string>
#include <vector>

#include "nmslope/dense_matrix.hpp"
#include "nmslope/mask.hpp"
#include "nmslope/pattern.hpp"

namespace nmslope {

// ---------------------------------------------------------------------------
// Unbiasedness of the masked-weight gradient estimator

struct EstimatorError {
  double relative_error = 0.0;  // ||mean - exact||_F / ||exact||_F (0 when exact = 0)
  double max_abs_error = 0.0;   // max_ij |mean - exact|
  double max_z = 0.0;           // max_ij |mean - exact| / SE_ij over entries with SE > 0
  std::size_t beyond_4se = 0;   // entries with |mean - exact| > 4 SE
};

struct EstimatorCheckResult {
  std::size_t samples = 0;
  EstimatorError bernoulli;   // element-wise Bernoulli(n/m) masks
  EstimatorError structured;  // uniformly random row-wise N:M masks (reported only)
};

// Draws `samples` masks M_i and compares (m/n) mean_i[dY (M_i .* W)] with
// dY W. W is d_out x d_in, dY is b x d_out. Sample i uses stream i of `seed`.
EstimatorCheckResult EstimatorCheck(const MatrixD& w, const MatrixD& dy, const NmPattern& pattern, std::size_t samples,
                             std::uint64_t seed);

struct ConvergencePoint {
  std::size_t samples = 0;
  double relative_error = 0.0;
};

struct ConvergenceFit {
  std::vector<ConvergencePoint> points;
  double slope = 0.0;  // least-squares slope of log(error) on log(samples)
};

// Least-squares slope of log y on log x.
double LogLogSlope(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Memory and FLOP accounting

// Bits per element for each stored quantity. Defaults follow a 16-bit
// weight/gradient, two 32-bit optimizer states, byte-stored mask setup.
struct BitBudget {
  double weight_bits = 16;
  double grad_bits = 16;
  double mask_bits = 8;
  double optimizer_states = 2;
  double state_bits = 32;
  bool store_transpose = true;
  bool include_mask = true;
  // Bits per group for the index code; negative means ceil(log2 C(m, n)).
  double index_bits = -1;

  double IndexBitsFor(const NmPattern& pattern) const;
};

struct TrainingMemoryBreakdown {
  // Bits per group of m weights.
  double weights = 0, mask = 0, gradients = 0, optimizer = 0;
  double sparse_total = 0, dense_total = 0;
  double ratio = 0;
};

// Training footprint of one N:M layer relative to its dense counterpart,
// computed per group of m weights.
TrainingMemoryBreakdown TrainingMemory(const BitBudget& budget, const NmPattern& pattern);
double TrainingMemoryRatio(const BitBudget& budget, const NmPattern& pattern);

// Inference footprint: packed values + index codes + adapters over dense.
double InferenceMemoryRatio(const NmPattern& pattern, std::size_t d_in, std::size_t d_out, std::size_t rank,
                            double value_bits = 16);

struct FlopReport {
  double dense_flops = 0;
  double sparse_flops = 0;
  double adapter_flops = 0;
  double ratio = 0;
  // FLOPs per byte touched (one read per operand element, one write per output).
  double dense_intensity = 0;
  double sparse_intensity = 0;
  double adapter_intensity = 0;
};

FlopReport FlopModel(std::size_t batch, std::size_t d_in, std::size_t d_out, const NmPattern& pattern,
                     std::size_t rank, double bytes_per_element = 2);

struct LayerFootprint {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  bool sparse = false;
  NmPattern pattern{1, 1};
};

struct ModelMemoryReport {
  double dense_bits = 0;
  double sparse_bits = 0;
  double ratio = 0;
};

// Whole-model training footprint: per-layer terms plus a dense remainder
// (embeddings, norms) that is the same in both configurations.
ModelMemoryReport ModelTrainingMemory(const std::vector<LayerFootprint>& layers, const BitBudget& budget,
                                      double dense_remainder_bits);

// ---------------------------------------------------------------------------
// Training trackers

// Cosine similarity of flattened matrices; 0 when either is all zeros.
double CosineSimilarity(const MatrixD& a, const MatrixD& b);

// For each snapshot (one matrix per layer), the cosine against the final
// matrices averaged over layers. Throws ShapeError on shape mismatch.
std::vector<double> AdapterCosineSeries(const std::vector<std::vector<MatrixD>>& snapshots,
                                        const std::vector<MatrixD>& final_values);

// Bit-packed copy of the keep bits of a list of masks.
class MaskSnapshot {
 public:
  MaskSnapshot() = default;
  explicit MaskSnapshot(const std::vector<const NmMask*>& masks);

  std::size_t size() const { return size_; }
  std::size_t Hamming(const MaskSnapshot& other) const;

 private:
  std::vector<std::uint64_t> bits_;
  std::size_t size_ = 0;
};

// Fraction of mask entries differing from the last entry of the log.
std::vector<double> MaskChangeSeries(const std::vector<MaskSnapshot>& log);

// Mean of a sliding window of `width` entries (shorter at the start).
std::vector<double> Smooth(const std::vector<double>& series, std::size_t width);

}  // namespace nmslope
