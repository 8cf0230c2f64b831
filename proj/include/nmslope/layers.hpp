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
#include <optional>
#include <variant>
#include <vector>

#include "nmslope/compressed.hpp"
#include "nmslope/dense_matrix.hpp"
#include "nmslope/mask.hpp"
#include "nmslope/optimizer.hpp"
#include "nmslope/sparse_ops.hpp"

namespace nmslope {

// Which weight the input gradient is computed with.
enum class InputGradMode {
  kDoublePruned,  // dX = dY * W^{R,C}, the training path
  kExact,         // dX = dY * W^R, used to isolate weight-gradient checks
};

enum class MaskInit { kRandom, kMagnitude };

template <typename T>
struct SparseLayerGrad {
  NmCompressed<T> weight;     // dY^T X restricted to the row mask
  DenseMatrix<T> bias;        // 1 x d_out, or 0 x 0 when the layer has no bias
  DenseMatrix<T> adapter_up;  // d_out x r, empty unless adapters are active
  DenseMatrix<T> adapter_down;
};

template <typename T>
struct SparseLayerState {
  MomentState<T> weight;  // nnz entries
  MomentState<T> bias;
  MomentState<T> adapter_up;
  MomentState<T> adapter_down;
};

// A linear layer trained with a fixed N:M mask. The forward pass uses the
// row-wise pruned weight W^R (packed along d_in); the input-gradient pass
// uses W^{R,C}, W^R further pruned along d_out, stored transposed and packed
// along d_out. The W^{R,C} mask is fixed when the layer is built.
template <typename T>
class SparseLinearLayer {
 public:
  // `weight` is d_out x d_in; `bias` is 1 x d_out or empty.
  SparseLinearLayer(const DenseMatrix<T>& weight, NmMask row_mask, DenseMatrix<T> bias);

  static SparseLinearLayer Create(const DenseMatrix<T>& weight, const NmPattern& pattern, MaskInit init,
                                  std::uint64_t mask_seed, DenseMatrix<T> bias);

  std::size_t d_in() const { return mask_.cols(); }
  std::size_t d_out() const { return mask_.rows(); }
  const NmPattern& pattern() const { return mask_.pattern(); }
  const NmMask& mask() const { return mask_; }
  const NmMask& backward_mask() const { return backward_mask_; }  // d_out x d_in
  const NmCompressed<T>& w_fwd() const { return w_fwd_; }
  const NmCompressed<T>& w_bwd() const { return w_bwd_; }
  const DenseMatrix<T>& bias() const { return bias_; }
  bool has_bias() const { return bias_.cols() != 0; }
  const AdapterPair<T>& adapters() const { return adapters_; }
  bool adapter_active() const { return adapter_active_; }

  // Y = X W^R^T + bias, plus X (L R)^T while adapters are active.
  DenseMatrix<T> Forward(const DenseMatrix<T>& x) const;

  DenseMatrix<T> BackwardInput(const DenseMatrix<T>& dy, InputGradMode mode = InputGradMode::kDoublePruned) const;

  SparseLayerGrad<T> BackwardWeight(const DenseMatrix<T>& x, const DenseMatrix<T>& dy) const;

  // g = grad / gamma + alpha * W^R on the stored values, the optimizer rule,
  // then both packed copies are refreshed in place. Masks never change.
  void OptimizerStep(const SparseLayerGrad<T>& grad, SparseLayerState<T>& state, const OptimizerConfig& cfg,
                     double lr);

  // Adds rank-r adapters with up = 0 and down ~ U(-1/sqrt(d_in), 1/sqrt(d_in)).
  void ActivateAdapters(std::size_t rank, Rng& rng);

  // Decompressed W^R (+ L R when adapters are active).
  DenseMatrix<T> EffectiveWeight() const;

  // Replaces the stored W^R values (and W^{R,C} accordingly) from a dense matrix.
  void SetWeightValues(const DenseMatrix<T>& dense);

 private:
  // Copies the W^R values into the W^{R,C} slots.
  void RefreshBackward();

  NmMask mask_;
  NmMask backward_mask_;
  NmCompressed<T> w_fwd_;
  NmCompressed<T> w_bwd_;
  std::vector<std::uint32_t> bwd_source_;  // W^R slot feeding each W^{R,C} slot
  DenseMatrix<T> bias_;
  AdapterPair<T> adapters_;
  bool adapter_active_ = false;
};

template <typename T>
class DenseLinearLayer {
 public:
  DenseLinearLayer(DenseMatrix<T> weight, DenseMatrix<T> bias);

  std::size_t d_in() const { return weight_.value.cols(); }
  std::size_t d_out() const { return weight_.value.rows(); }
  const DenseMatrix<T>& weight() const { return weight_.value; }
  DenseMatrix<T>& mutable_weight() { return weight_.value; }
  const DenseMatrix<T>& bias() const { return bias_.value; }
  bool has_bias() const { return bias_.value.cols() != 0; }
  const DenseMatrix<T>& weight_grad() const { return weight_.grad; }

  DenseMatrix<T> Forward(const DenseMatrix<T>& x) const;
  DenseMatrix<T> BackwardInput(const DenseMatrix<T>& dy) const;
  void AccumulateGrad(const DenseMatrix<T>& x, const DenseMatrix<T>& dy);
  void ZeroGrad();
  void Step(const OptimizerConfig& cfg, double lr);

 private:
  DenseParam<T> weight_;
  DenseParam<T> bias_;
};

// Dynamic-mask baseline: dense shadow weights, a magnitude N:M mask
// recomputed after every update, and a decay term pulling pruned weights
// toward zero.
template <typename T>
class DynamicLinearLayer {
 public:
  DynamicLinearLayer(DenseMatrix<T> weight, DenseMatrix<T> bias, NmPattern pattern);

  std::size_t d_in() const { return weight_.value.cols(); }
  std::size_t d_out() const { return weight_.value.rows(); }
  const NmMask& mask() const { return mask_; }
  const DenseMatrix<T>& shadow_weight() const { return weight_.value; }
  const DenseMatrix<T>& bias() const { return bias_.value; }

  DenseMatrix<T> Forward(const DenseMatrix<T>& x) const;
  DenseMatrix<T> BackwardInput(const DenseMatrix<T>& dy) const;
  // Dense dY^T X (no decay term yet).
  DenseMatrix<T> BackwardWeight(const DenseMatrix<T>& x, const DenseMatrix<T>& dy) const;
  void AccumulateBiasGrad(const DenseMatrix<T>& dy);

  // Adds decay_factor * (1 - mask) * W to `grad`, applies the optimizer,
  // recomputes the magnitude mask and returns the fraction of mask entries
  // that changed.
  double DynamicBaselineStep(const DenseMatrix<T>& grad, double decay_factor, const OptimizerConfig& cfg, double lr);

 private:
  DenseParam<T> weight_;
  DenseParam<T> bias_;
  NmMask mask_;
  DenseMatrix<T> masked_;
};

// Type-erased linear slot used by the models. Owns pending gradients
// between Backward and Step.
template <typename T>
class LinearModule {
 public:
  enum class Kind { kDense, kSparse, kDynamic };

  explicit LinearModule(DenseLinearLayer<T> layer) : impl_(std::move(layer)) {}
  explicit LinearModule(SparseLinearLayer<T> layer) : impl_(std::move(layer)) {}
  explicit LinearModule(DynamicLinearLayer<T> layer) : impl_(std::move(layer)) {}

  Kind kind() const { return static_cast<Kind>(impl_.index()); }
  std::size_t d_in() const;
  std::size_t d_out() const;

  DenseMatrix<T> Forward(const DenseMatrix<T>& x) const;

  // Stores the parameter gradient for the next Step and returns dX.
  DenseMatrix<T> Backward(const DenseMatrix<T>& x, const DenseMatrix<T>& dy, InputGradMode mode);

  // Applies the pending gradient. For dynamic layers returns the mask change
  // fraction, otherwise nullopt.
  std::optional<double> Step(const OptimizerConfig& cfg, double lr, double decay_factor);

  void ActivateAdapters(std::size_t rank, Rng& rng);

  DenseLinearLayer<T>* dense() { return std::get_if<DenseLinearLayer<T>>(&impl_); }
  SparseLinearLayer<T>* sparse() { return std::get_if<SparseLinearLayer<T>>(&impl_); }
  DynamicLinearLayer<T>* dynamic() { return std::get_if<DynamicLinearLayer<T>>(&impl_); }
  const DenseLinearLayer<T>* dense() const { return std::get_if<DenseLinearLayer<T>>(&impl_); }
  const SparseLinearLayer<T>* sparse() const { return std::get_if<SparseLinearLayer<T>>(&impl_); }
  const DynamicLinearLayer<T>* dynamic() const { return std::get_if<DynamicLinearLayer<T>>(&impl_); }

  // Pending sparse gradient (valid between Backward and Step).
  const std::optional<SparseLayerGrad<T>>& pending_sparse_grad() const { return sparse_grad_; }
  const DenseMatrix<T>& pending_dynamic_grad() const { return dynamic_grad_; }

 private:
  std::variant<DenseLinearLayer<T>, SparseLinearLayer<T>, DynamicLinearLayer<T>> impl_;
  std::optional<SparseLayerGrad<T>> sparse_grad_;
  SparseLayerState<T> sparse_state_;
  DenseMatrix<T> dynamic_grad_;
};

}  // namespace nmslope
