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

#include "nmslope/trainer.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "nmslope/analysis.hpp"
#include "nmslope/checkpoint.hpp"
#include "nmslope/errors.hpp"

namespace nmslope {

namespace {

// Sub-streams of the run seed.
enum SeedStream : std::uint64_t { kModelSeed = 1, kDataSeed = 2, kMaskSeed = 3, kAdapterSeed = 4, kEvalSeed = 5 };

std::uint64_t Derive(std::uint64_t seed, SeedStream stream) { return Rng::ForStream(seed, stream).Next(); }

// Held-out regression batches come from streams far above any iteration index.
constexpr std::uint64_t kHeldOutStream = 1ull << 48;

constexpr double kDivergenceFactor = 10.0;
constexpr int kDivergencePatience = 100;

template <typename T>
struct DataSource {
  std::function<Batch<T>(std::uint64_t)> train;
  std::vector<Batch<T>> train_eval;
  std::vector<Batch<T>> validation_eval;
  std::size_t vocab = 0;
};

template <typename T>
DataSource<T> MakeData(const TrainConfig& c) {
  DataSource<T> d;
  const std::uint64_t data_seed = Derive(c.seed, kDataSeed);
  if (c.model == ModelKind::kMlp) {
    RegressionSpec spec = c.regression;
    spec.d_in = c.mlp.d_in;
    spec.d_out = c.mlp.d_out;
    spec.seed = data_seed;
    auto task = std::make_shared<RegressionTask>(spec);
    const std::size_t rows = c.batch_size;
    d.train = [task, rows](std::uint64_t t) { return task->template Sample<T>(t, rows); };
    for (std::size_t i = 0; i < c.eval_batches; ++i) {
      d.train_eval.push_back(task->template Sample<T>(i, rows));
      d.validation_eval.push_back(task->template Sample<T>(kHeldOutStream + i, c.eval_batch_size));
    }
    return d;
  }
  auto corpus = std::make_shared<CharCorpus>(CharCorpus::Load(c.corpus_path, c.validation_fraction));
  d.vocab = corpus->vocab_size();
  const std::size_t seqs = c.batch_size;
  const std::size_t len = c.lm.context;
  d.train = [corpus, data_seed, seqs, len](std::uint64_t t) {
    return corpus->template Sample<T>(Split::kTrain, data_seed, t, seqs, len);
  };
  const std::uint64_t eval_seed = Derive(c.seed, kEvalSeed);
  for (std::size_t i = 0; i < c.eval_batches; ++i) {
    d.train_eval.push_back(corpus->template Sample<T>(Split::kTrain, eval_seed, i, c.eval_batch_size, len));
    d.validation_eval.push_back(corpus->template Sample<T>(Split::kValidation, eval_seed, i, c.eval_batch_size, len));
  }
  return d;
}

template <typename T>
double MeanLoss(const Model<T>& model, const std::vector<Batch<T>>& batches) {
  double sum = 0.0;
  for (const auto& b : batches) sum += model.Evaluate(b);
  return batches.empty() ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(batches.size());
}

template <typename T>
std::vector<const NmMask*> PrunedMasks(const Model<T>& model) {
  std::vector<const NmMask*> out;
  for (const auto& l : model.linears()) {
    if (const auto* s = l.module.sparse()) out.push_back(&s->mask());
    if (const auto* d = l.module.dynamic()) out.push_back(&d->mask());
  }
  return out;
}

template <typename T>
std::vector<MatrixD> AdapterDowns(const Model<T>& model) {
  std::vector<MatrixD> out;
  for (const auto& l : model.linears())
    if (const auto* s = l.module.sparse(); s && s->adapter_active()) out.push_back(s->adapters().down.template Cast<double>());
  return out;
}

template <typename T>
RunReport TrainImpl(const TrainConfig& c, const ProgressFn& progress, const std::string& checkpoint_dir) {
  const auto started = std::chrono::steady_clock::now();
  DataSource<T> data = MakeData<T>(c);
  auto model = BuildModel<T>(c, data.vocab);

  RunReport report;
  const auto iterations = static_cast<std::size_t>(c.iterations);
  report.loss.reserve(iterations);
  report.lr.reserve(iterations);
  report.adapter_cosine.assign(iterations, std::numeric_limits<double>::quiet_NaN());
  report.mask_diff.assign(iterations, std::numeric_limits<double>::quiet_NaN());
  report.mask_step_change.assign(iterations, std::numeric_limits<double>::quiet_NaN());
  report.sparse_layers = model->sparse_layer_count();
  report.average_density =
      c.sparsity.AverageDensity(c.model == ModelKind::kLm ? c.lm.blocks : 1);
  report.adapter_rank = c.AdapterRank();
  const std::int64_t adapter_start = c.AdapterStart();

  const LrSchedule schedule{c.lr_shape, c.optimizer.lr, c.warmup, c.iterations};
  Rng adapter_rng = Rng::ForStream(Derive(c.seed, kAdapterSeed), 0);

  std::vector<MaskSnapshot> mask_log;
  std::vector<std::size_t> mask_log_at;
  std::vector<std::vector<MatrixD>> adapter_log;
  std::vector<std::size_t> adapter_log_at;

  std::unique_ptr<Model<T>> control;
  double first_loss = 0.0;
  int above = 0;
  for (std::int64_t t = 0; t < c.iterations; ++t) {
    const Batch<T> batch = data.train(static_cast<std::uint64_t>(t));
    if (t == adapter_start && report.adapter_rank > 0 && report.sparse_layers > 0) {
      const auto before = model->Output(batch);
      if (c.adapter.paired_control) control = model->Clone();
      if (model->ActivateAdapters(report.adapter_rank, adapter_rng) > 0) {
        report.adapters_used = true;
        report.adapter_start = t;
        const auto after = model->Output(batch);
        double diff = 0.0;
        for (std::size_t i = 0; i < after.size(); ++i)
          diff = std::max(diff, std::abs(static_cast<double>(after.values()[i]) - before.values()[i]));
        report.adapter_switch_max_diff = diff;
      }
    }
    double loss = 0.0;
    try {
      loss = model->ForwardBackward(batch, c.input_grad);
    } catch (const NonFiniteError& e) {
      throw DivergenceError("iteration " + std::to_string(t) + ": " + e.what());
    }
    if (!std::isfinite(loss))
      throw DivergenceError("loss became non-finite at iteration " + std::to_string(t));
    if (t == 0) first_loss = loss;
    above = loss > kDivergenceFactor * first_loss ? above + 1 : 0;
    if (above >= kDivergencePatience)
      throw DivergenceError("loss stayed above " + std::to_string(kDivergenceFactor) + "x its initial value for " +
                            std::to_string(kDivergencePatience) + " iterations (iteration " + std::to_string(t) + ")");
    const double lr = schedule.At(t);
    const auto stats = model->Step(c.optimizer, lr, c.sparsity.dynamic_decay);
    if (control) {
      control->ForwardBackward(batch, c.input_grad);
      control->Step(c.optimizer, lr, c.sparsity.dynamic_decay);
    }
    report.loss.push_back(loss);
    report.lr.push_back(lr);
    const auto idx = static_cast<std::size_t>(t);
    if (stats.mask_change) report.mask_step_change[idx] = *stats.mask_change;
    if (idx % c.mask_log_every == 0 || t + 1 == c.iterations) {
      mask_log.emplace_back(PrunedMasks(*model));
      mask_log_at.push_back(idx);
    }
    if (report.adapters_used) {
      adapter_log.push_back(AdapterDowns(*model));
      adapter_log_at.push_back(idx);
    }
    if (progress) progress(t, loss);
  }

  if (!mask_log.empty()) {
    const auto series = MaskChangeSeries(mask_log);
    for (std::size_t i = 0; i < series.size(); ++i) report.mask_diff[mask_log_at[i]] = series[i];
  }
  if (!adapter_log.empty()) {
    const auto series = AdapterCosineSeries(adapter_log, adapter_log.back());
    for (std::size_t i = 0; i < series.size(); ++i) report.adapter_cosine[adapter_log_at[i]] = series[i];
  }
  report.final_train_loss = MeanLoss(*model, data.train_eval);
  report.final_validation_loss = MeanLoss(*model, data.validation_eval);
  if (control) {
    report.control_train_loss = MeanLoss(*control, data.train_eval);
    report.control_validation_loss = MeanLoss(*control, data.validation_eval);
  }
  if (c.model == ModelKind::kLm) report.perplexity = std::exp(report.final_validation_loss);
  if (!checkpoint_dir.empty()) SaveCheckpoint(*model, checkpoint_dir);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace

void TrainConfig::Validate() const {
  if (iterations <= 0) throw ConfigError("train.iterations must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (mask_log_every == 0) throw ConfigError("report.mask_log_every must be positive");
  if (!(adapter.lazy_fraction >= 0.0 && adapter.lazy_fraction <= 1.0))
    throw ConfigError("adapter.lazy_fraction must be in [0, 1]");
  if (!(adapter.rank_ratio >= 0.0 && adapter.rank_ratio <= 1.0)) throw ConfigError("adapter.rank_ratio must be in [0, 1]");
  if (!(optimizer.lr > 0.0)) throw ConfigError("optimizer.lr must be positive");
  if (!(optimizer.grad_scale > 0.0)) throw ConfigError("optimizer.grad_scale must be positive");
  if (optimizer.weight_decay < 0.0) throw ConfigError("optimizer.weight_decay must be non-negative");
  if (warmup < 0) throw ConfigError("optimizer.warmup must be non-negative");
  if (model == ModelKind::kLm) {
    if (corpus_path.empty()) throw ConfigError("data.corpus is required for the language model");
    if (lm.heads == 0 || lm.hidden % lm.heads != 0) throw ConfigError("model.hidden must be divisible by model.heads");
  }
  if (sparsity.enabled) {
    if (sparsity.block_patterns.empty()) throw ConfigError("sparsity.pattern is required when sparsity is enabled");
    const std::size_t blocks = model == ModelKind::kLm ? lm.blocks : 1;
    for (std::size_t b = 0; b < blocks; ++b) sparsity.PatternFor(b, blocks);
  }
}

std::size_t TrainConfig::AdapterRank() const {
  if (adapter.rank_ratio <= 0.0) return 0;
  const std::size_t hidden = model == ModelKind::kLm ? lm.hidden : mlp.hidden;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(adapter.rank_ratio * static_cast<double>(hidden))));
}

std::int64_t TrainConfig::AdapterStart() const {
  return static_cast<std::int64_t>(std::ceil((1.0 - adapter.lazy_fraction) * static_cast<double>(iterations)));
}

template <typename T>
std::unique_ptr<Model<T>> BuildModel(const TrainConfig& c, std::size_t vocab) {
  SparsitySpec sparsity = c.sparsity;
  sparsity.mask_seed = c.mask_seed ? *c.mask_seed : Derive(c.seed, kMaskSeed);
  const std::uint64_t model_seed = Derive(c.seed, kModelSeed);
  if (c.model == ModelKind::kMlp) return std::make_unique<MlpModel<T>>(c.mlp, sparsity, model_seed);
  LmShape shape = c.lm;
  if (vocab > 0) shape.vocab = vocab;
  return std::make_unique<TinyLm<T>>(shape, sparsity, model_seed);
}

RunReport Train(const TrainConfig& config, const ProgressFn& progress, const std::string& checkpoint_dir) {
  config.Validate();
  return config.double_precision ? TrainImpl<double>(config, progress, checkpoint_dir)
                                 : TrainImpl<float>(config, progress, checkpoint_dir);
}

template std::unique_ptr<Model<float>> BuildModel(const TrainConfig&, std::size_t);
template std::unique_ptr<Model<double>> BuildModel(const TrainConfig&, std::size_t);

}  // namespace nmslope
