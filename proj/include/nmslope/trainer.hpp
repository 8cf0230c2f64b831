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
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nmslope/data.hpp"
#include "nmslope/model.hpp"

namespace nmslope {

enum class ModelKind { kMlp, kLm };

struct AdapterSpec {
  // Adapter rank as a fraction of the hidden size; 0 disables adapters.
  double rank_ratio = 0.0;
  // Adapters are added for the final `lazy_fraction` of the iterations.
  double lazy_fraction = 0.01;
  // Also continue an adapter-free copy of the model from the switch point on
  // the same batches, reporting its final losses as a paired control.
  bool paired_control = false;
};

struct TrainConfig {
  ModelKind model = ModelKind::kMlp;
  MlpShape mlp;
  LmShape lm;
  RegressionSpec regression;  // its seed is derived from `seed`
  std::string corpus_path;
  double validation_fraction = 0.1;

  SparsitySpec sparsity;  // mask_seed is derived from `seed` unless overridden
  std::optional<std::uint64_t> mask_seed;
  AdapterSpec adapter;
  OptimizerConfig optimizer;
  LrSchedule::Shape lr_shape = LrSchedule::Shape::kConstant;
  std::int64_t warmup = 0;

  std::int64_t iterations = 1000;
  std::size_t batch_size = 32;  // rows (MLP) or sequences (LM)
  std::uint64_t seed = 1;
  std::size_t eval_batches = 8;
  std::size_t eval_batch_size = 64;
  // Interval, in iterations, between mask snapshots for the mask-diff series.
  std::size_t mask_log_every = 1;
  InputGradMode input_grad = InputGradMode::kDoublePruned;
  bool double_precision = false;

  // Throws ConfigError for inconsistent settings.
  void Validate() const;
  // Adapter rank implied by rank_ratio and the hidden size (0 when unused).
  std::size_t AdapterRank() const;
  // First iteration with adapters: ceil((1 - lazy_fraction) * iterations).
  std::int64_t AdapterStart() const;
};

struct RunReport {
  std::vector<double> loss;
  std::vector<double> lr;
  // Mean cosine of the adapter down-projections against their final values;
  // NaN outside the adapter window.
  std::vector<double> adapter_cosine;
  // Fraction of pruned-mask entries differing from the final mask; NaN at
  // iterations without a snapshot.
  std::vector<double> mask_diff;
  // Fraction of dynamic-mask entries changed by each step; NaN for static runs.
  std::vector<double> mask_step_change;

  double final_train_loss = 0.0;       // fixed training-split batches
  double final_validation_loss = 0.0;  // fixed held-out batches
  std::optional<double> perplexity;    // exp(validation loss), LM only

  std::size_t adapter_rank = 0;
  bool adapters_used = false;
  std::int64_t adapter_start = -1;
  // max |Y_after - Y_before| of the model output on the switch batch.
  std::optional<double> adapter_switch_max_diff;
  // Final losses of the adapter-free copy (AdapterSpec::paired_control).
  std::optional<double> control_train_loss;
  std::optional<double> control_validation_loss;

  std::size_t sparse_layers = 0;
  double average_density = 1.0;
  double wall_seconds = 0.0;
};

// Called after every optimizer step with the iteration index and its loss.
using ProgressFn = std::function<void(std::int64_t, double)>;

// Runs the training loop. Throws DivergenceError when the loss turns
// non-finite or stays above ten times its first value for 100 steps. A
// non-empty `checkpoint_dir` receives the final model (see SaveCheckpoint).
RunReport Train(const TrainConfig& config, const ProgressFn& progress = {}, const std::string& checkpoint_dir = {});

// Helpers shared with the tests.
template <typename T>
std::unique_ptr<Model<T>> BuildModel(const TrainConfig& config, std::size_t vocab);

}  // namespace nmslope
