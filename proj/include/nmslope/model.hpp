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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nmslope/layers.hpp"

namespace nmslope {

enum class PrunedModules { kMlpOnly, kMlpAndAttention };
enum class MaskMode { kStaticRandom, kStaticMagnitude, kDynamic };

// Which linear layers are pruned and how.
struct SparsitySpec {
  bool enabled = false;
  // One pattern per block, or a single pattern applied to every block.
  std::vector<NmPattern> block_patterns;
  PrunedModules modules = PrunedModules::kMlpOnly;
  MaskMode mask_mode = MaskMode::kStaticRandom;
  // The first linear layer after the input stays dense. Output heads are always dense.
  bool dense_first = true;
  std::uint64_t mask_seed = 0;
  // Decay applied to pruned weights by the dynamic baseline.
  double dynamic_decay = 2e-4;

  // Pattern for `block` of `blocks`; throws ConfigError on an inconsistent list.
  NmPattern PatternFor(std::size_t block, std::size_t blocks) const;
  // Mean density over the pruned blocks.
  double AverageDensity(std::size_t blocks) const;
};

enum class LinearRole { kMlpUp, kMlpDown, kAttnQkv, kAttnProj, kHead };

// A mini-batch. Regression uses inputs/targets; the LM uses `tokens`, laid out
// as `sequences` rows of `length + 1` ids (inputs are the first `length`,
// targets the last `length`).
template <typename T>
struct Batch {
  DenseMatrix<T> inputs;
  DenseMatrix<T> targets;
  std::vector<std::uint32_t> tokens;
  std::size_t sequences = 0;
  std::size_t length = 0;
};

// A named dense tensor owned by a model (embeddings, norms).
template <typename T>
struct NamedParam {
  std::string name;
  DenseParam<T> param;
};

template <typename T>
struct NamedLinear {
  std::string name;
  LinearModule<T> module;
};

template <typename T>
struct StepStats {
  // Mean mask-change fraction over dynamic layers; nullopt when there are none.
  std::optional<double> mask_change;
};

// Common base: owns the linear layers and dense parameters, applies updates.
template <typename T>
class Model {
 public:
  virtual ~Model() = default;

  // Mean loss on `batch` without touching gradients.
  virtual double Evaluate(const Batch<T>& batch) const = 0;
  // Mean loss; leaves pending gradients in every parameter.
  virtual double ForwardBackward(const Batch<T>& batch, InputGradMode mode) = 0;
  // Model output for `batch` (predictions or logits), for continuity checks.
  virtual DenseMatrix<T> Output(const Batch<T>& batch) const = 0;
  // Deep copy, including optimizer state.
  virtual std::unique_ptr<Model<T>> Clone() const = 0;

  StepStats<T> Step(const OptimizerConfig& cfg, double lr, double dynamic_decay);

  // Activates adapters of the given rank on every sparse layer; returns how
  // many layers received them.
  std::size_t ActivateAdapters(std::size_t rank, Rng& rng);

  std::vector<NamedLinear<T>>& linears() { return linears_; }
  const std::vector<NamedLinear<T>>& linears() const { return linears_; }
  std::vector<NamedParam<T>>& params() { return params_; }
  const std::vector<NamedParam<T>>& params() const { return params_; }
  std::size_t sparse_layer_count() const;

 protected:
  std::size_t AddLinear(std::string name, LinearModule<T> module);
  std::size_t AddParam(std::string name, DenseMatrix<T> value, bool decay);
  LinearModule<T>& linear(std::size_t i) { return linears_[i].module; }
  const LinearModule<T>& linear(std::size_t i) const { return linears_[i].module; }
  DenseParam<T>& param(std::size_t i) { return params_[i].param; }
  const DenseParam<T>& param(std::size_t i) const { return params_[i].param; }

 private:
  std::vector<NamedLinear<T>> linears_;
  std::vector<NamedParam<T>> params_;
};

// Builds a dense, static-sparse or dynamic linear slot for a given role.
// `index` seeds the layer's mask stream.
template <typename T>
LinearModule<T> MakeLinear(DenseMatrix<T> weight, DenseMatrix<T> bias, const SparsitySpec& spec, LinearRole role,
                           std::size_t block, std::size_t blocks, bool first_after_input, std::uint64_t index);

struct MlpShape {
  std::size_t d_in = 32;
  std::size_t hidden = 64;
  std::size_t d_out = 16;
};

// Two-layer perceptron: y = fc2(tanh(fc1(x))), mean squared error.
template <typename T>
class MlpModel final : public Model<T> {
 public:
  MlpModel(const MlpShape& shape, const SparsitySpec& sparsity, std::uint64_t seed);

  double Evaluate(const Batch<T>& batch) const override;
  double ForwardBackward(const Batch<T>& batch, InputGradMode mode) override;
  DenseMatrix<T> Output(const Batch<T>& batch) const override;
  std::unique_ptr<Model<T>> Clone() const override { return std::make_unique<MlpModel>(*this); }

  const MlpShape& shape() const { return shape_; }

 private:
  MlpShape shape_;
};

struct LmShape {
  std::size_t vocab = 65;
  std::size_t context = 32;
  std::size_t hidden = 128;
  std::size_t heads = 4;
  std::size_t blocks = 3;
  std::size_t mlp_ratio = 4;
};

// Decoder-only character model: token + position embeddings, pre-norm blocks
// of causal self-attention and a GELU perceptron, final norm, dense head,
// token-level cross-entropy.
template <typename T>
class TinyLm final : public Model<T> {
 public:
  TinyLm(const LmShape& shape, const SparsitySpec& sparsity, std::uint64_t seed);

  double Evaluate(const Batch<T>& batch) const override;
  double ForwardBackward(const Batch<T>& batch, InputGradMode mode) override;
  DenseMatrix<T> Output(const Batch<T>& batch) const override;
  std::unique_ptr<Model<T>> Clone() const override { return std::make_unique<TinyLm>(*this); }

  const LmShape& shape() const { return shape_; }

  struct BlockCache;
  struct Cache;

 private:
  DenseMatrix<T> Logits(const Batch<T>& batch, Cache* cache) const;
  std::size_t tok_emb_ = 0, pos_emb_ = 0, lnf_gain_ = 0, lnf_bias_ = 0, head_ = 0;
  struct BlockIds {
    std::size_t ln1_gain, ln1_bias, ln2_gain, ln2_bias, qkv, proj, fc1, fc2;
  };
  std::vector<BlockIds> block_ids_;
  LmShape shape_;
};

// Mean cross-entropy of row-wise softmax(logits) against `targets`; when
// `grad` is given it receives dLoss/dlogits.
template <typename T>
double CrossEntropy(const DenseMatrix<T>& logits, std::span<const std::uint32_t> targets, DenseMatrix<T>* grad);

}  // namespace nmslope
