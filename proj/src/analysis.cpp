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

#include "nmslope/analysis.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "nmslope/errors.hpp"
#include "nmslope/rng.hpp"

namespace nmslope {

namespace {

// Running per-entry mean and variance (Welford).
class EntryStats {
 public:
  explicit EntryStats(std::size_t size) : mean_(size, 0.0), m2_(size, 0.0) {}

  void Add(const MatrixD& x) {
    ++count_;
    const double inv = 1.0 / static_cast<double>(count_);
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double v = x.values()[i];
      const double delta = v - mean_[i];
      mean_[i] += delta * inv;
      m2_[i] += delta * (v - mean_[i]);
    }
  }

  EstimatorError Compare(const MatrixD& exact) const {
    EstimatorError out;
    double diff2 = 0.0;
    double ref2 = 0.0;
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double e = exact.values()[i];
      const double d = mean_[i] - e;
      diff2 += d * d;
      ref2 += e * e;
      out.max_abs_error = std::max(out.max_abs_error, std::abs(d));
      if (count_ < 2) continue;
      const double se = std::sqrt(m2_[i] / static_cast<double>(count_ - 1) / static_cast<double>(count_));
      if (se > 0.0) {
        out.max_z = std::max(out.max_z, std::abs(d) / se);
        if (std::abs(d) > 4.0 * se) ++out.beyond_4se;
      } else if (std::abs(d) > 0.0) {
        ++out.beyond_4se;
      }
    }
    out.relative_error = ref2 > 0.0 ? std::sqrt(diff2 / ref2) : std::sqrt(diff2);
    return out;
  }

 private:
  std::vector<double> mean_;
  std::vector<double> m2_;
  std::size_t count_ = 0;
};

}  // namespace

EstimatorCheckResult EstimatorCheck(const MatrixD& w, const MatrixD& dy, const NmPattern& pattern, std::size_t samples,
                             std::uint64_t seed) {
  if (dy.cols() != w.rows())
    throw ShapeError("EstimatorCheck: dY has " + std::to_string(dy.cols()) + " columns, W has " +
                     std::to_string(w.rows()) + " rows");
  if (samples == 0) throw InvalidArgument("EstimatorCheck: samples must be positive");
  const double s = pattern.density();
  const double scale = 1.0 / s;
  const MatrixD exact = MatMul(dy, w);
  EntryStats bernoulli(exact.size());
  EntryStats structured(exact.size());
  const bool grouped = w.cols() % pattern.m() == 0;
  MatrixD masked(w.rows(), w.cols());
  for (std::size_t i = 0; i < samples; ++i) {
    Rng rng = Rng::ForStream(seed, i);
    for (std::size_t k = 0; k < w.size(); ++k)
      masked.values()[k] = rng.Uniform() < s ? scale * w.values()[k] : 0.0;
    bernoulli.Add(MatMul(dy, masked));
    if (grouped) {
      const NmMask mask = RandomMask(w.rows(), w.cols(), pattern, rng.Next());
      masked = mask.Apply(w);
      for (double& v : masked.values()) v *= scale;
      structured.Add(MatMul(dy, masked));
    }
  }
  EstimatorCheckResult out;
  out.samples = samples;
  out.bernoulli = bernoulli.Compare(exact);
  if (grouped) out.structured = structured.Compare(exact);
  return out;
}

double LogLogSlope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("LogLogSlope: need two or more paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw InvalidArgument("LogLogSlope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw InvalidArgument("LogLogSlope: x values must differ");
  return sxy / sxx;
}

// ---------------------------------------------------------------------------

double BitBudget::IndexBitsFor(const NmPattern& pattern) const {
  return index_bits >= 0 ? index_bits : static_cast<double>(IndexBits(pattern));
}

TrainingMemoryBreakdown TrainingMemory(const BitBudget& b, const NmPattern& pattern) {
  if (b.weight_bits <= 0 || b.grad_bits <= 0 || b.mask_bits <= 0 || b.optimizer_states < 0 || b.state_bits <= 0)
    throw InvalidArgument("BitBudget: bit widths must be positive");
  const double n = pattern.n();
  const double m = pattern.m();
  TrainingMemoryBreakdown out;
  const double copies = b.store_transpose ? 2.0 : 1.0;
  out.weights = copies * (n * b.weight_bits + b.IndexBitsFor(pattern));
  out.mask = b.include_mask ? m * b.mask_bits : 0.0;
  out.gradients = n * b.grad_bits;
  out.optimizer = n * b.optimizer_states * b.state_bits;
  out.sparse_total = out.weights + out.mask + out.gradients + out.optimizer;
  out.dense_total = m * (b.weight_bits + b.grad_bits) + m * b.optimizer_states * b.state_bits;
  out.ratio = out.sparse_total / out.dense_total;
  return out;
}

double TrainingMemoryRatio(const BitBudget& budget, const NmPattern& pattern) {
  return TrainingMemory(budget, pattern).ratio;
}

double InferenceMemoryRatio(const NmPattern& pattern, std::size_t d_in, std::size_t d_out, std::size_t rank,
                            double value_bits) {
  if (d_in == 0 || d_out == 0) throw InvalidArgument("InferenceMemoryRatio: empty layer");
  if (rank > std::min(d_in, d_out)) throw InvalidArgument("InferenceMemoryRatio: rank exceeds min(d_in, d_out)");
  const double area = static_cast<double>(d_in) * static_cast<double>(d_out);
  const double sparse = pattern.density() * area * value_bits +
                        area / static_cast<double>(pattern.m()) * static_cast<double>(IndexBits(pattern)) +
                        static_cast<double>(d_in + d_out) * static_cast<double>(rank) * value_bits;
  return sparse / (area * value_bits);
}

FlopReport FlopModel(std::size_t batch, std::size_t d_in, std::size_t d_out, const NmPattern& pattern,
                     std::size_t rank, double bytes_per_element) {
  if (batch == 0 || d_in == 0 || d_out == 0) throw InvalidArgument("FlopModel: dimensions must be positive");
  const double b = batch, di = d_in, dout = d_out, r = rank, s = pattern.density();
  FlopReport out;
  out.dense_flops = b * di * dout;
  out.sparse_flops = out.dense_flops * s;
  out.adapter_flops = b * (di + dout) * r;
  out.ratio = (out.sparse_flops + out.adapter_flops) / out.dense_flops;
  const double io = b * di + b * dout;
  out.dense_intensity = out.dense_flops / (bytes_per_element * (io + di * dout));
  const double index_bytes = di * dout / pattern.m() * IndexBits(pattern) / 8.0;
  out.sparse_intensity = out.sparse_flops / (bytes_per_element * (io + s * di * dout) + index_bytes);
  if (rank > 0) {
    // X R^T then Y2 L^T: inputs, both factors, the intermediate twice, the output.
    const double touched = b * di + r * di + 2 * b * r + dout * r + b * dout;
    out.adapter_intensity = out.adapter_flops / (bytes_per_element * touched);
  }
  return out;
}

ModelMemoryReport ModelTrainingMemory(const std::vector<LayerFootprint>& layers, const BitBudget& budget,
                                      double dense_remainder_bits) {
  ModelMemoryReport out;
  for (const auto& l : layers) {
    const NmPattern p = l.sparse ? l.pattern : NmPattern(1, 1);
    const auto per_group = TrainingMemory(budget, p);
    const double groups = static_cast<double>(l.d_in) * static_cast<double>(l.d_out) / p.m();
    out.dense_bits += per_group.dense_total * groups;
    out.sparse_bits += (l.sparse ? per_group.sparse_total : per_group.dense_total) * groups;
  }
  out.dense_bits += dense_remainder_bits;
  out.sparse_bits += dense_remainder_bits;
  out.ratio = out.dense_bits > 0 ? out.sparse_bits / out.dense_bits : 1.0;
  return out;
}

// ---------------------------------------------------------------------------

double CosineSimilarity(const MatrixD& a, const MatrixD& b) {
  RequireSameShape(a, b, "CosineSimilarity");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a.values()[i] * b.values()[i];
    na += a.values()[i] * a.values()[i];
    nb += b.values()[i] * b.values()[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::vector<double> AdapterCosineSeries(const std::vector<std::vector<MatrixD>>& snapshots,
                                        const std::vector<MatrixD>& final_values) {
  if (snapshots.empty()) throw InvalidArgument("AdapterCosineSeries: no snapshots");
  if (final_values.empty()) throw InvalidArgument("AdapterCosineSeries: no layers");
  std::vector<double> out;
  out.reserve(snapshots.size());
  for (const auto& snap : snapshots) {
    if (snap.size() != final_values.size()) throw ShapeError("AdapterCosineSeries: layer count mismatch");
    double sum = 0.0;
    for (std::size_t l = 0; l < snap.size(); ++l) sum += CosineSimilarity(snap[l], final_values[l]);
    out.push_back(sum / static_cast<double>(snap.size()));
  }
  return out;
}

MaskSnapshot::MaskSnapshot(const std::vector<const NmMask*>& masks) {
  for (const NmMask* m : masks) size_ += m->rows() * m->cols();
  bits_.assign((size_ + 63) / 64, 0);
  std::size_t pos = 0;
  for (const NmMask* m : masks)
    for (std::uint8_t k : m->keep()) {
      if (k) bits_[pos / 64] |= 1ull << (pos % 64);
      ++pos;
    }
}

std::size_t MaskSnapshot::Hamming(const MaskSnapshot& other) const {
  if (size_ != other.size_) throw ShapeError("MaskSnapshot: snapshots cover different shapes");
  std::size_t count = 0;
  for (std::size_t i = 0; i < bits_.size(); ++i) count += static_cast<std::size_t>(std::popcount(bits_[i] ^ other.bits_[i]));
  return count;
}

std::vector<double> MaskChangeSeries(const std::vector<MaskSnapshot>& log) {
  if (log.empty()) throw InvalidArgument("MaskChangeSeries: empty log");
  const MaskSnapshot& last = log.back();
  std::vector<double> out;
  out.reserve(log.size());
  for (const auto& s : log)
    out.push_back(last.size() == 0 ? 0.0
                                   : static_cast<double>(s.Hamming(last)) / static_cast<double>(last.size()));
  return out;
}

std::vector<double> Smooth(const std::vector<double>& series, std::size_t width) {
  if (width == 0) throw InvalidArgument("Smooth: width must be positive");
  std::vector<double> out(series.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    if (i >= width) sum -= series[i - width];
    out[i] = sum / static_cast<double>(std::min(i + 1, width));
  }
  return out;
}

}  // namespace nmslope
