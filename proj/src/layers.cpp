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

#include "nmslope/layers.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace nmslope {

namespace {

template <typename T>
void AddBias(DenseMatrix<T>& y, const DenseMatrix<T>& bias) {
  if (bias.cols() != 0) AddRowVector<T>(y, bias.row(0));
}

template <typename T>
DenseMatrix<T> BiasGrad(const DenseMatrix<T>& dy) {
  return DenseMatrix<T>(1, dy.cols(), ColumnSums(dy));
}

template <typename T>
void CheckBias(const DenseMatrix<T>& bias, std::size_t d_out) {
  if (bias.cols() != 0 && (bias.rows() != 1 || bias.cols() != d_out))
    throw ShapeError("bias must be 1 x d_out or empty");
}

// g = grad / gamma + alpha * w, then the optimizer rule, for a dense tensor.
template <typename T>
void DenseUpdate(DenseMatrix<T>& w, const DenseMatrix<T>& grad, MomentState<T>& state, const OptimizerConfig& cfg,
                 double lr, bool decay) {
  RequireSameShape(w, grad, "DenseUpdate");
  const T inv_scale = static_cast<T>(1.0 / cfg.grad_scale);
  const T alpha = decay ? static_cast<T>(cfg.weight_decay) : T(0);
  std::vector<T> g(w.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = inv_scale * grad.values()[i] + alpha * w.values()[i];
  state.Apply(w.values(), g, cfg, lr);
}

}  // namespace

// ---------------------------------------------------------------------------
// SparseLinearLayer

template <typename T>
SparseLinearLayer<T>::SparseLinearLayer(const DenseMatrix<T>& weight, NmMask row_mask, DenseMatrix<T> bias)
    : mask_(std::move(row_mask)),
      backward_mask_(DoublePrune(weight, mask_, mask_.pattern())),
      w_fwd_(Compress(weight, mask_)),
      w_bwd_(Compress(Transpose(backward_mask_.Apply(weight)), backward_mask_.Transposed())),
      bias_(std::move(bias)),
      adapters_(AdapterPair<T>::Empty(weight.rows(), weight.cols())) {
  if (mask_.grouping() != Grouping::kRowWise) throw InvalidArgument("SparseLinearLayer: mask must be row-wise");
  weight.RequireFinite("SparseLinearLayer weight");
  CheckBias(bias_, weight.rows());
  // Both masks are fixed, so every W^{R,C} slot maps to one W^R slot (or to
  // nothing, for entries removed by the second pruning and padding slots).
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> fwd_slot(d_out() * d_in(), kNone);
  const auto& fwd_cols = w_fwd_.DecodeColumns();
  const std::size_t fwd_per_row = w_fwd_.groups_per_row() * pattern().n();
  for (std::size_t s = 0; s < fwd_cols.size(); ++s)
    fwd_slot[(s / fwd_per_row) * d_in() + fwd_cols[s]] = static_cast<std::uint32_t>(s);
  const auto& bwd_cols = w_bwd_.DecodeColumns();
  const std::size_t bwd_per_row = w_bwd_.groups_per_row() * pattern().n();
  bwd_source_.resize(bwd_cols.size());
  for (std::size_t s = 0; s < bwd_cols.size(); ++s) {
    const std::size_t in = s / bwd_per_row;
    const std::size_t out = bwd_cols[s];
    bwd_source_[s] = backward_mask_.kept(out, in) ? fwd_slot[out * d_in() + in] : kNone;
  }
}

template <typename T>
SparseLinearLayer<T> SparseLinearLayer<T>::Create(const DenseMatrix<T>& weight, const NmPattern& pattern,
                                                  MaskInit init, std::uint64_t mask_seed, DenseMatrix<T> bias) {
  NmMask mask = init == MaskInit::kRandom ? RandomMask(weight.rows(), weight.cols(), pattern, mask_seed)
                                          : MagnitudeMask(weight, pattern);
  return SparseLinearLayer(weight, std::move(mask), std::move(bias));
}

template <typename T>
DenseMatrix<T> SparseLinearLayer<T>::Forward(const DenseMatrix<T>& x) const {
  DenseMatrix<T> y = adapter_active_ ? FusedSparseLowRankForward(x, w_fwd_, adapters_) : Spmm(x, w_fwd_);
  AddBias(y, bias_);
  return y;
}

template <typename T>
DenseMatrix<T> SparseLinearLayer<T>::BackwardInput(const DenseMatrix<T>& dy, InputGradMode mode) const {
  if (dy.cols() != d_out()) throw ShapeError("BackwardInput: dY has " + std::to_string(dy.cols()) + " columns");
  DenseMatrix<T> dx = mode == InputGradMode::kDoublePruned ? Spmm(dy, w_bwd_) : MatMul(dy, Decompress(w_fwd_));
  if (adapter_active_) AddInPlace(dx, MatMul(MatMul(dy, adapters_.up), adapters_.down));
  return dx;
}

template <typename T>
SparseLayerGrad<T> SparseLinearLayer<T>::BackwardWeight(const DenseMatrix<T>& x, const DenseMatrix<T>& dy) const {
  if (x.cols() != d_in() || dy.cols() != d_out() || x.rows() != dy.rows())
    throw ShapeError("BackwardWeight: X and dY do not conform to the layer");
  SparseLayerGrad<T> g{PruneAndCompress(MatMulTransA(dy, x), mask_, w_fwd_), DenseMatrix<T>(), DenseMatrix<T>(),
                       DenseMatrix<T>()};
  if (has_bias()) g.bias = BiasGrad(dy);
  if (adapter_active_) {
    g.adapter_up = MatMulTransA(dy, MatMulTransB(x, adapters_.down));
    g.adapter_down = MatMulTransA(MatMul(dy, adapters_.up), x);
  }
  return g;
}

template <typename T>
void SparseLinearLayer<T>::OptimizerStep(const SparseLayerGrad<T>& grad, SparseLayerState<T>& state,
                                         const OptimizerConfig& cfg, double lr) {
  const NmCompressed<T> g =
      SparseAdd(grad.weight, w_fwd_, static_cast<T>(1.0 / cfg.grad_scale), static_cast<T>(cfg.weight_decay));
  state.weight.Apply(w_fwd_.mutable_values(), g.values(), cfg, lr);
  RefreshBackward();

  if (has_bias()) {
    if (grad.bias.cols() != bias_.cols()) throw ShapeError("OptimizerStep: bias gradient shape mismatch");
    DenseUpdate(bias_, grad.bias, state.bias, cfg, lr, false);
  }
  if (adapter_active_) {
    DenseUpdate(adapters_.up, grad.adapter_up, state.adapter_up, cfg, lr, cfg.adapter_weight_decay);
    DenseUpdate(adapters_.down, grad.adapter_down, state.adapter_down, cfg, lr, cfg.adapter_weight_decay);
  }
}

template <typename T>
void SparseLinearLayer<T>::ActivateAdapters(std::size_t rank, Rng& rng) {
  if (rank == 0) return;
  if (rank > std::min(d_in(), d_out())) throw InvalidArgument("adapter rank exceeds min(d_in, d_out)");
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in()));
  adapters_ = AdapterPair<T>(DenseMatrix<T>(d_out(), rank), DenseMatrix<T>::RandomUniform(rank, d_in(), rng, -bound, bound));
  adapter_active_ = true;
}

template <typename T>
DenseMatrix<T> SparseLinearLayer<T>::EffectiveWeight() const {
  DenseMatrix<T> w = Decompress(w_fwd_);
  if (adapter_active_) AddInPlace(w, MatMul(adapters_.up, adapters_.down));
  return w;
}

template <typename T>
void SparseLinearLayer<T>::SetWeightValues(const DenseMatrix<T>& dense) {
  UpdateSparseValues(w_fwd_, dense);
  RefreshBackward();
}

template <typename T>
void SparseLinearLayer<T>::RefreshBackward() {
  const auto src = w_fwd_.values();
  auto dst = w_bwd_.mutable_values();
  for (std::size_t s = 0; s < dst.size(); ++s)
    dst[s] = bwd_source_[s] == std::numeric_limits<std::uint32_t>::max() ? T(0) : src[bwd_source_[s]];
}

// ---------------------------------------------------------------------------
// DenseLinearLayer

template <typename T>
DenseLinearLayer<T>::DenseLinearLayer(DenseMatrix<T> weight, DenseMatrix<T> bias)
    : weight_(std::move(weight), true), bias_(std::move(bias), false) {
  CheckBias(bias_.value, weight_.value.rows());
}

template <typename T>
DenseMatrix<T> DenseLinearLayer<T>::Forward(const DenseMatrix<T>& x) const {
  auto y = MatMulTransB(x, weight_.value);
  AddBias(y, bias_.value);
  return y;
}

template <typename T>
DenseMatrix<T> DenseLinearLayer<T>::BackwardInput(const DenseMatrix<T>& dy) const {
  return MatMul(dy, weight_.value);
}

template <typename T>
void DenseLinearLayer<T>::AccumulateGrad(const DenseMatrix<T>& x, const DenseMatrix<T>& dy) {
  AddInPlace(weight_.grad, MatMulTransA(dy, x));
  if (has_bias()) AddInPlace(bias_.grad, BiasGrad(dy));
}

template <typename T>
void DenseLinearLayer<T>::ZeroGrad() {
  weight_.ZeroGrad();
  bias_.ZeroGrad();
}

template <typename T>
void DenseLinearLayer<T>::Step(const OptimizerConfig& cfg, double lr) {
  weight_.Step(cfg, lr);
  if (has_bias()) bias_.Step(cfg, lr);
}

// ---------------------------------------------------------------------------
// DynamicLinearLayer

template <typename T>
DynamicLinearLayer<T>::DynamicLinearLayer(DenseMatrix<T> weight, DenseMatrix<T> bias, NmPattern pattern)
    : weight_(std::move(weight), true),
      bias_(std::move(bias), false),
      mask_(MagnitudeMask(weight_.value, pattern)),
      masked_(mask_.Apply(weight_.value)) {
  CheckBias(bias_.value, weight_.value.rows());
}

template <typename T>
DenseMatrix<T> DynamicLinearLayer<T>::Forward(const DenseMatrix<T>& x) const {
  auto y = MatMulTransB(x, masked_);
  AddBias(y, bias_.value);
  return y;
}

template <typename T>
DenseMatrix<T> DynamicLinearLayer<T>::BackwardInput(const DenseMatrix<T>& dy) const {
  return MatMul(dy, masked_);
}

template <typename T>
DenseMatrix<T> DynamicLinearLayer<T>::BackwardWeight(const DenseMatrix<T>& x, const DenseMatrix<T>& dy) const {
  return MatMulTransA(dy, x);
}

template <typename T>
void DynamicLinearLayer<T>::AccumulateBiasGrad(const DenseMatrix<T>& dy) {
  if (bias_.value.cols() != 0) bias_.grad = BiasGrad(dy);
}

template <typename T>
double DynamicLinearLayer<T>::DynamicBaselineStep(const DenseMatrix<T>& grad, double decay_factor,
                                                  const OptimizerConfig& cfg, double lr) {
  RequireSameShape(grad, weight_.value, "DynamicBaselineStep");
  const T decay = static_cast<T>(decay_factor);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const T pruned = mask_.keep()[i] ? T(0) : T(1);
    weight_.grad.values()[i] = grad.values()[i] + decay * pruned * weight_.value.values()[i];
  }
  weight_.Step(cfg, lr);
  if (bias_.value.cols() != 0) bias_.Step(cfg, lr);
  NmMask next = MagnitudeMask(weight_.value, mask_.pattern());
  const double changed = MaskDifference(mask_, next);
  mask_ = std::move(next);
  masked_ = mask_.Apply(weight_.value);
  return changed;
}

// ---------------------------------------------------------------------------
// LinearModule

template <typename T>
std::size_t LinearModule<T>::d_in() const {
  return std::visit([](const auto& l) { return l.d_in(); }, impl_);
}

template <typename T>
std::size_t LinearModule<T>::d_out() const {
  return std::visit([](const auto& l) { return l.d_out(); }, impl_);
}

template <typename T>
DenseMatrix<T> LinearModule<T>::Forward(const DenseMatrix<T>& x) const {
  return std::visit([&](const auto& l) { return l.Forward(x); }, impl_);
}

template <typename T>
DenseMatrix<T> LinearModule<T>::Backward(const DenseMatrix<T>& x, const DenseMatrix<T>& dy, InputGradMode mode) {
  if (auto* d = dense()) {
    d->ZeroGrad();
    d->AccumulateGrad(x, dy);
    return d->BackwardInput(dy);
  }
  if (auto* s = sparse()) {
    sparse_grad_ = s->BackwardWeight(x, dy);
    return s->BackwardInput(dy, mode);
  }
  auto* dyn = dynamic();
  dynamic_grad_ = dyn->BackwardWeight(x, dy);
  dyn->AccumulateBiasGrad(dy);
  return dyn->BackwardInput(dy);
}

template <typename T>
std::optional<double> LinearModule<T>::Step(const OptimizerConfig& cfg, double lr, double decay_factor) {
  if (auto* d = dense()) {
    d->Step(cfg, lr);
    return std::nullopt;
  }
  if (auto* s = sparse()) {
    if (!sparse_grad_) throw InvalidArgument("LinearModule::Step called without a pending gradient");
    s->OptimizerStep(*sparse_grad_, sparse_state_, cfg, lr);
    sparse_grad_.reset();
    return std::nullopt;
  }
  return dynamic()->DynamicBaselineStep(dynamic_grad_, decay_factor, cfg, lr);
}

template <typename T>
void LinearModule<T>::ActivateAdapters(std::size_t rank, Rng& rng) {
  if (auto* s = sparse()) s->ActivateAdapters(rank, rng);
}

template class SparseLinearLayer<float>;
template class SparseLinearLayer<double>;
template class DenseLinearLayer<float>;
template class DenseLinearLayer<double>;
template class DynamicLinearLayer<float>;
template class DynamicLinearLayer<double>;
template class LinearModule<float>;
template class LinearModule<double>;

}  // namespace nmslope
