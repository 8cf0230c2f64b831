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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nmslope/dense_matrix.hpp"
#include "nmslope/errors.hpp"

namespace nmslope {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // alpha: folded into the update direction as g = grad / gamma + alpha * w.
  double weight_decay = 0.0;
  // gamma: loss scale the raw gradient carries.
  double grad_scale = 1.0;
  bool adapter_weight_decay = false;
};

// Per-tensor moment buffers, sized to the tensor's stored values only (for
// packed weights that is nnz, never the dense shape).
template <typename T>
class MomentState {
 public:
  MomentState() = default;
  explicit MomentState(std::size_t size) : first_(size, T(0)), second_(size, T(0)) {}

  std::size_t size() const { return first_.size(); }
  std::int64_t steps() const { return steps_; }
  std::span<const T> first() const { return first_; }
  std::span<const T> second() const { return second_; }

  // w <- rule(w, g), where g already includes weight decay and unscaling.
  void Apply(std::span<T> w, std::span<const T> g, const OptimizerConfig& cfg, double lr) {
    if (w.size() != g.size()) throw ShapeError("MomentState::Apply: weight/gradient length mismatch");
    if (cfg.kind == OptimizerKind::kSgd) {
      const T step = static_cast<T>(lr);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * g[i];
      ++steps_;
      return;
    }
    if (first_.size() != w.size()) {
      if (steps_ != 0) throw ShapeError("MomentState::Apply: tensor size changed between steps");
      first_.assign(w.size(), T(0));
      second_.assign(w.size(), T(0));
    }
    ++steps_;
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(steps_)));
    const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(steps_)));
    const T eps = static_cast<T>(cfg.eps);
    const T step = static_cast<T>(lr);
    for (std::size_t i = 0; i < w.size(); ++i) {
      first_[i] = b1 * first_[i] + (T(1) - b1) * g[i];
      second_[i] = b2 * second_[i] + (T(1) - b2) * g[i] * g[i];
      const T mhat = first_[i] / c1;
      const T vhat = second_[i] / c2;
      w[i] -= step * mhat / (std::sqrt(vhat) + eps);
    }
  }

 private:
  std::vector<T> first_;
  std::vector<T> second_;
  std::int64_t steps_ = 0;
};

// A dense trainable tensor with its gradient and optimizer state.
template <typename T>
struct DenseParam {
  DenseMatrix<T> value;
  DenseMatrix<T> grad;
  MomentState<T> state;
  bool decay = true;

  DenseParam() = default;
  DenseParam(DenseMatrix<T> v, bool apply_decay)
      : value(std::move(v)), grad(value.rows(), value.cols()), decay(apply_decay) {}

  void ZeroGrad() { grad.Fill(T(0)); }

  // g = grad / gamma + alpha * w (alpha only when decay is on), then the rule.
  void Step(const OptimizerConfig& cfg, double lr) {
    const T inv_scale = static_cast<T>(1.0 / cfg.grad_scale);
    const T alpha = decay ? static_cast<T>(cfg.weight_decay) : T(0);
    std::vector<T> g(value.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = inv_scale * grad.values()[i] + alpha * value.values()[i];
    state.Apply(value.values(), g, cfg, lr);
  }
};

// Learning rate at iteration t: linear warmup then constant or cosine decay
// to 10% of the base rate.
struct LrSchedule {
  enum class Shape { kConstant, kCosine };
  Shape shape = Shape::kConstant;
  double base = 1e-3;
  std::int64_t warmup = 0;
  std::int64_t total = 1;

  double At(std::int64_t t) const {
    if (warmup > 0 && t < warmup) return base * static_cast<double>(t + 1) / static_cast<double>(warmup);
    if (shape == Shape::kConstant) return base;
    const double span = static_cast<double>(std::max<std::int64_t>(1, total - warmup));
    const double progress = std::min(1.0, static_cast<double>(t - warmup) / span);
    return base * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846)));
  }
};

}  // namespace nmslope
