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

#include "nmslope/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace nmslope {

// ---------------------------------------------------------------------------
// Sparsity bookkeeping

NmPattern SparsitySpec::PatternFor(std::size_t block, std::size_t blocks) const {
  if (block_patterns.empty()) throw ConfigError("sparsity: no pattern given");
  if (block_patterns.size() == 1) return block_patterns.front();
  if (blocks == 0 || blocks % block_patterns.size() != 0)
    throw ConfigError("sparsity: " + std::to_string(block_patterns.size()) + " patterns cannot be spread evenly over " +
                      std::to_string(blocks) + " blocks");
  return block_patterns[block * block_patterns.size() / blocks];
}

double SparsitySpec::AverageDensity(std::size_t blocks) const {
  if (!enabled) return 1.0;
  double sum = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) sum += PatternFor(b, blocks).density();
  return sum / static_cast<double>(blocks);
}

template <typename T>
LinearModule<T> MakeLinear(DenseMatrix<T> weight, DenseMatrix<T> bias, const SparsitySpec& spec, LinearRole role,
                           std::size_t block, std::size_t blocks, bool first_after_input, std::uint64_t index) {
  const bool attention = role == LinearRole::kAttnQkv || role == LinearRole::kAttnProj;
  const bool prune = spec.enabled && role != LinearRole::kHead && !(first_after_input && spec.dense_first) &&
                     (!attention || spec.modules == PrunedModules::kMlpAndAttention);
  if (!prune) return LinearModule<T>(DenseLinearLayer<T>(std::move(weight), std::move(bias)));
  const NmPattern pattern = spec.PatternFor(block, blocks);
  if (spec.mask_mode == MaskMode::kDynamic)
    return LinearModule<T>(DynamicLinearLayer<T>(std::move(weight), std::move(bias), pattern));
  const MaskInit init = spec.mask_mode == MaskMode::kStaticRandom ? MaskInit::kRandom : MaskInit::kMagnitude;
  const std::uint64_t mask_seed = Rng::ForStream(spec.mask_seed, index).Next();
  return LinearModule<T>(SparseLinearLayer<T>::Create(weight, pattern, init, mask_seed, std::move(bias)));
}

// ---------------------------------------------------------------------------
// Model base

template <typename T>
std::size_t Model<T>::AddLinear(std::string name, LinearModule<T> module) {
  linears_.push_back(NamedLinear<T>{std::move(name), std::move(module)});
  return linears_.size() - 1;
}

template <typename T>
std::size_t Model<T>::AddParam(std::string name, DenseMatrix<T> value, bool decay) {
  params_.push_back(NamedParam<T>{std::move(name), DenseParam<T>(std::move(value), decay)});
  return params_.size() - 1;
}

template <typename T>
StepStats<T> Model<T>::Step(const OptimizerConfig& cfg, double lr, double dynamic_decay) {
  double changed = 0.0;
  std::size_t dynamic = 0;
  for (auto& l : linears_) {
    if (auto diff = l.module.Step(cfg, lr, dynamic_decay)) {
      changed += *diff;
      ++dynamic;
    }
  }
  for (auto& p : params_) p.param.Step(cfg, lr);
  StepStats<T> stats;
  if (dynamic > 0) stats.mask_change = changed / static_cast<double>(dynamic);
  return stats;
}

template <typename T>
std::size_t Model<T>::ActivateAdapters(std::size_t rank, Rng& rng) {
  std::size_t count = 0;
  for (auto& l : linears_) {
    if (auto* s = l.module.sparse()) {
      s->ActivateAdapters(std::min({rank, s->d_in(), s->d_out()}), rng);
      ++count;
    }
  }
  return count;
}

template <typename T>
std::size_t Model<T>::sparse_layer_count() const {
  std::size_t count = 0;
  for (const auto& l : linears_) count += l.module.kind() != LinearModule<T>::Kind::kDense ? 1 : 0;
  return count;
}

namespace {

// Draws the initial value of parameter number `stream` so that every
// configuration of a model starts from the same weights.
template <typename T>
DenseMatrix<T> InitNormal(std::size_t rows, std::size_t cols, std::uint64_t seed, std::uint64_t stream, double stddev) {
  Rng rng = Rng::ForStream(seed, stream);
  return DenseMatrix<T>::RandomNormal(rows, cols, rng, stddev);
}

template <typename T>
DenseMatrix<T> BiasRow(std::size_t d) {
  return DenseMatrix<T>(1, d);
}

// ---- element-wise helpers --------------------------------------------------

template <typename T>
T GeluValue(T u) {
  constexpr T c = static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
  const T t = std::tanh(c * (u + T(0.044715) * u * u * u));
  return T(0.5) * u * (T(1) + t);
}

template <typename T>
T GeluSlope(T u) {
  constexpr T c = static_cast<T>(0.7978845608028654);
  const T t = std::tanh(c * (u + T(0.044715) * u * u * u));
  return T(0.5) * (T(1) + t) + T(0.5) * u * (T(1) - t * t) * c * (T(1) + T(3 * 0.044715) * u * u);
}

// ---- layer norm -------------------------------------------------------------

constexpr double kNormEps = 1e-5;

template <typename T>
DenseMatrix<T> LayerNorm(const DenseMatrix<T>& x, const DenseMatrix<T>& gain, const DenseMatrix<T>& bias,
                         DenseMatrix<T>* xhat_out, std::vector<T>* rstd_out) {
  const std::size_t d = x.cols();
  DenseMatrix<T> y(x.rows(), d);
  DenseMatrix<T> xhat(x.rows(), d);
  std::vector<T> rstd(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    T mean = 0;
    for (T v : row) mean += v;
    mean /= static_cast<T>(d);
    T var = 0;
    for (T v : row) var += (v - mean) * (v - mean);
    var /= static_cast<T>(d);
    rstd[r] = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
    for (std::size_t j = 0; j < d; ++j) {
      xhat(r, j) = (row[j] - mean) * rstd[r];
      y(r, j) = xhat(r, j) * gain(0, j) + bias(0, j);
    }
  }
  if (xhat_out) *xhat_out = std::move(xhat);
  if (rstd_out) *rstd_out = std::move(rstd);
  return y;
}

// Returns dX and accumulates into the gain/bias gradients.
template <typename T>
DenseMatrix<T> LayerNormBackward(const DenseMatrix<T>& dy, const DenseMatrix<T>& xhat, const std::vector<T>& rstd,
                                 const DenseMatrix<T>& gain, DenseMatrix<T>& dgain, DenseMatrix<T>& dbias) {
  const std::size_t d = dy.cols();
  DenseMatrix<T> dx(dy.rows(), d);
  std::vector<T> dxhat(d);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    T mean_dxhat = 0;
    T mean_dxhat_xhat = 0;
    for (std::size_t j = 0; j < d; ++j) {
      dgain(0, j) += dy(r, j) * xhat(r, j);
      dbias(0, j) += dy(r, j);
      dxhat[j] = dy(r, j) * gain(0, j);
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xhat(r, j);
    }
    mean_dxhat /= static_cast<T>(d);
    mean_dxhat_xhat /= static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) dx(r, j) = rstd[r] * (dxhat[j] - mean_dxhat - xhat(r, j) * mean_dxhat_xhat);
  }
  return dx;
}

// ---- causal multi-head attention -------------------------------------------

// qkv is (sequences * length) x 3d; returns the concatenated head outputs.
// `probs`, when given, receives one length x length matrix per (sequence, head).
template <typename T>
DenseMatrix<T> Attention(const DenseMatrix<T>& qkv, std::size_t sequences, std::size_t length, std::size_t heads,
                         std::vector<DenseMatrix<T>>* probs) {
  const std::size_t d = qkv.cols() / 3;
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  DenseMatrix<T> out(qkv.rows(), d);
  if (probs) probs->assign(sequences * heads, DenseMatrix<T>());
  std::vector<T> p(length);
  for (std::size_t s = 0; s < sequences; ++s)
    for (std::size_t h = 0; h < heads; ++h) {
      DenseMatrix<T> pm(probs ? length : 0, probs ? length : 0);
      const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
      for (std::size_t t = 0; t < length; ++t) {
        const auto q = qkv.row(s * length + t);
        T max_score = -std::numeric_limits<T>::infinity();
        for (std::size_t u = 0; u <= t; ++u) {
          const auto k = qkv.row(s * length + u);
          T dot = 0;
          for (std::size_t j = 0; j < dh; ++j) dot += q[qo + j] * k[ko + j];
          p[u] = dot * scale;
          max_score = std::max(max_score, p[u]);
        }
        T sum = 0;
        for (std::size_t u = 0; u <= t; ++u) {
          p[u] = std::exp(p[u] - max_score);
          sum += p[u];
        }
        auto o = out.row(s * length + t);
        for (std::size_t u = 0; u <= t; ++u) {
          p[u] /= sum;
          const auto v = qkv.row(s * length + u);
          for (std::size_t j = 0; j < dh; ++j) o[qo + j] += p[u] * v[vo + j];
          if (probs) pm(t, u) = p[u];
        }
      }
      if (probs) (*probs)[s * heads + h] = std::move(pm);
    }
  return out;
}

template <typename T>
DenseMatrix<T> AttentionBackward(const DenseMatrix<T>& dout, const DenseMatrix<T>& qkv,
                                 const std::vector<DenseMatrix<T>>& probs, std::size_t sequences, std::size_t length,
                                 std::size_t heads) {
  const std::size_t d = qkv.cols() / 3;
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  DenseMatrix<T> dqkv(qkv.rows(), qkv.cols());
  std::vector<T> dp(length);
  for (std::size_t s = 0; s < sequences; ++s)
    for (std::size_t h = 0; h < heads; ++h) {
      const auto& pm = probs[s * heads + h];
      const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
      for (std::size_t t = 0; t < length; ++t) {
        const auto dor = dout.row(s * length + t);
        const auto q = qkv.row(s * length + t);
        T weighted = 0;
        for (std::size_t u = 0; u <= t; ++u) {
          const auto v = qkv.row(s * length + u);
          auto dv = dqkv.row(s * length + u);
          T dot = 0;
          for (std::size_t j = 0; j < dh; ++j) {
            dot += dor[qo + j] * v[vo + j];
            dv[vo + j] += pm(t, u) * dor[qo + j];
          }
          dp[u] = dot;
          weighted += pm(t, u) * dot;
        }
        auto dq = dqkv.row(s * length + t);
        for (std::size_t u = 0; u <= t; ++u) {
          const T ds = pm(t, u) * (dp[u] - weighted) * scale;
          const auto k = qkv.row(s * length + u);
          auto dk = dqkv.row(s * length + u);
          for (std::size_t j = 0; j < dh; ++j) {
            dq[qo + j] += ds * k[ko + j];
            dk[ko + j] += ds * q[qo + j];
          }
        }
      }
    }
  return dqkv;
}

}  // namespace

template <typename T>
double CrossEntropy(const DenseMatrix<T>& logits, std::span<const std::uint32_t> targets, DenseMatrix<T>* grad) {
  if (targets.size() != logits.rows()) throw ShapeError("CrossEntropy: one target per row required");
  if (grad) *grad = DenseMatrix<T>(logits.rows(), logits.cols());
  const T inv_rows = T(1) / static_cast<T>(logits.rows());
  double total = 0.0;
  std::vector<T> e(logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    if (targets[r] >= row.size()) throw InvalidArgument("CrossEntropy: target id out of range");
    T max_logit = row[0];
    for (T v : row) max_logit = std::max(max_logit, v);
    T sum = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      e[j] = std::exp(row[j] - max_logit);
      sum += e[j];
    }
    total += static_cast<double>(std::log(sum) + max_logit - row[targets[r]]);
    if (grad) {
      auto g = grad->row(r);
      for (std::size_t j = 0; j < row.size(); ++j) g[j] = e[j] / sum * inv_rows;
      g[targets[r]] -= inv_rows;
    }
  }
  return total / static_cast<double>(logits.rows());
}

// ---------------------------------------------------------------------------
// MLP

template <typename T>
MlpModel<T>::MlpModel(const MlpShape& shape, const SparsitySpec& sparsity, std::uint64_t seed) : shape_(shape) {
  const double s1 = 1.0 / std::sqrt(static_cast<double>(shape.d_in));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  this->AddLinear("fc1", MakeLinear(InitNormal<T>(shape.hidden, shape.d_in, seed, 0, s1), BiasRow<T>(shape.hidden),
                                    sparsity, LinearRole::kMlpUp, 0, 1, true, 0));
  this->AddLinear("fc2", MakeLinear(InitNormal<T>(shape.d_out, shape.hidden, seed, 1, s2), BiasRow<T>(shape.d_out),
                                    sparsity, LinearRole::kMlpDown, 0, 1, false, 1));
}

template <typename T>
DenseMatrix<T> MlpModel<T>::Output(const Batch<T>& batch) const {
  auto h = this->linear(0).Forward(batch.inputs);
  for (T& v : h.values()) v = std::tanh(v);
  return this->linear(1).Forward(h);
}

namespace {

template <typename T>
double MeanSquaredError(const DenseMatrix<T>& y, const DenseMatrix<T>& target, DenseMatrix<T>* grad) {
  RequireSameShape(y, target, "MeanSquaredError");
  const double count = static_cast<double>(y.size());
  if (grad) *grad = DenseMatrix<T>(y.rows(), y.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T diff = y.values()[i] - target.values()[i];
    total += static_cast<double>(diff) * static_cast<double>(diff);
    if (grad) grad->values()[i] = static_cast<T>(2.0 / count) * diff;
  }
  return total / count;
}

}  // namespace

template <typename T>
double MlpModel<T>::Evaluate(const Batch<T>& batch) const {
  return MeanSquaredError<T>(Output(batch), batch.targets, nullptr);
}

template <typename T>
double MlpModel<T>::ForwardBackward(const Batch<T>& batch, InputGradMode mode) {
  auto pre = this->linear(0).Forward(batch.inputs);
  DenseMatrix<T> h = pre;
  for (T& v : h.values()) v = std::tanh(v);
  const auto y = this->linear(1).Forward(h);
  DenseMatrix<T> dy;
  const double loss = MeanSquaredError(y, batch.targets, &dy);
  auto dh = this->linear(1).Backward(h, dy, mode);
  for (std::size_t i = 0; i < dh.size(); ++i) dh.values()[i] *= T(1) - h.values()[i] * h.values()[i];
  this->linear(0).Backward(batch.inputs, dh, mode);
  return loss;
}

// ---------------------------------------------------------------------------
// Tiny decoder LM

template <typename T>
struct TinyLm<T>::BlockCache {
  DenseMatrix<T> h_in, xhat1, a, qkv, attn, h_mid, xhat2, b, u, g;
  std::vector<T> rstd1, rstd2;
  std::vector<DenseMatrix<T>> probs;
};

template <typename T>
struct TinyLm<T>::Cache {
  std::vector<BlockCache> blocks;
  DenseMatrix<T> xhatf, z;
  std::vector<T> rstdf;
};

template <typename T>
TinyLm<T>::TinyLm(const LmShape& shape, const SparsitySpec& sparsity, std::uint64_t seed) : shape_(shape) {
  if (shape.heads == 0 || shape.hidden % shape.heads != 0) throw ConfigError("model.hidden must be divisible by model.heads");
  if (shape.blocks == 0 || shape.vocab == 0 || shape.context == 0) throw ConfigError("model: empty dimension");
  const std::size_t d = shape.hidden;
  const std::size_t f = shape.mlp_ratio * d;
  constexpr double kStd = 0.02;
  const double residual_std = kStd / std::sqrt(2.0 * static_cast<double>(shape.blocks));
  std::uint64_t stream = 0;
  std::uint64_t linear_index = 0;
  tok_emb_ = this->AddParam("tok_emb", InitNormal<T>(shape.vocab, d, seed, stream++, kStd), false);
  pos_emb_ = this->AddParam("pos_emb", InitNormal<T>(shape.context, d, seed, stream++, kStd), false);
  auto ones = [&] { return DenseMatrix<T>(1, d, T(1)); };
  for (std::size_t b = 0; b < shape.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    BlockIds ids{};
    ids.ln1_gain = this->AddParam(p + "ln1.gain", ones(), false);
    ids.ln1_bias = this->AddParam(p + "ln1.bias", BiasRow<T>(d), false);
    ids.ln2_gain = this->AddParam(p + "ln2.gain", ones(), false);
    ids.ln2_bias = this->AddParam(p + "ln2.bias", BiasRow<T>(d), false);
    ids.qkv = this->AddLinear(p + "attn.qkv", MakeLinear(InitNormal<T>(3 * d, d, seed, stream++, kStd), BiasRow<T>(3 * d),
                                                        sparsity, LinearRole::kAttnQkv, b, shape.blocks, b == 0,
                                                        linear_index++));
    ids.proj = this->AddLinear(p + "attn.proj", MakeLinear(InitNormal<T>(d, d, seed, stream++, residual_std),
                                                          BiasRow<T>(d), sparsity, LinearRole::kAttnProj, b,
                                                          shape.blocks, false, linear_index++));
    ids.fc1 = this->AddLinear(p + "mlp.fc1", MakeLinear(InitNormal<T>(f, d, seed, stream++, kStd), BiasRow<T>(f),
                                                       sparsity, LinearRole::kMlpUp, b, shape.blocks, false,
                                                       linear_index++));
    ids.fc2 = this->AddLinear(p + "mlp.fc2", MakeLinear(InitNormal<T>(d, f, seed, stream++, residual_std),
                                                       BiasRow<T>(d), sparsity, LinearRole::kMlpDown, b, shape.blocks,
                                                       false, linear_index++));
    block_ids_.push_back(ids);
  }
  lnf_gain_ = this->AddParam("lnf.gain", ones(), false);
  lnf_bias_ = this->AddParam("lnf.bias", BiasRow<T>(d), false);
  head_ = this->AddLinear("head", MakeLinear(InitNormal<T>(shape.vocab, d, seed, stream++, kStd), BiasRow<T>(shape.vocab),
                                             sparsity, LinearRole::kHead, 0, shape.blocks, false, linear_index++));
}

namespace {

template <typename T>
void CheckTokens(const Batch<T>& batch, const LmShape& shape) {
  if (batch.length == 0 || batch.length > shape.context)
    throw ShapeError("TinyLm: sequence length must be in [1, context]");
  if (batch.tokens.size() != batch.sequences * (batch.length + 1))
    throw ShapeError("TinyLm: token buffer does not match sequences x (length + 1)");
}

template <typename T>
std::vector<std::uint32_t> Targets(const Batch<T>& batch) {
  std::vector<std::uint32_t> out;
  out.reserve(batch.sequences * batch.length);
  for (std::size_t s = 0; s < batch.sequences; ++s)
    for (std::size_t t = 0; t < batch.length; ++t) out.push_back(batch.tokens[s * (batch.length + 1) + t + 1]);
  return out;
}

}  // namespace

template <typename T>
DenseMatrix<T> TinyLm<T>::Logits(const Batch<T>& batch, Cache* cache) const {
  CheckTokens(batch, shape_);
  const std::size_t length = batch.length;
  const std::size_t rows = batch.sequences * length;
  const std::size_t d = shape_.hidden;
  const auto& tok = this->param(tok_emb_).value;
  const auto& pos = this->param(pos_emb_).value;
  DenseMatrix<T> h(rows, d);
  for (std::size_t s = 0; s < batch.sequences; ++s)
    for (std::size_t t = 0; t < length; ++t) {
      const std::uint32_t id = batch.tokens[s * (length + 1) + t];
      if (id >= shape_.vocab) throw InvalidArgument("TinyLm: token id out of range");
      auto out = h.row(s * length + t);
      for (std::size_t j = 0; j < d; ++j) out[j] = tok(id, j) + pos(t, j);
    }
  if (cache) cache->blocks.assign(shape_.blocks, BlockCache{});
  for (std::size_t b = 0; b < shape_.blocks; ++b) {
    const BlockIds& ids = block_ids_[b];
    BlockCache* c = cache ? &cache->blocks[b] : nullptr;
    if (c) c->h_in = h;
    auto a = LayerNorm(h, this->param(ids.ln1_gain).value, this->param(ids.ln1_bias).value, c ? &c->xhat1 : nullptr,
                       c ? &c->rstd1 : nullptr);
    auto qkv = this->linear(ids.qkv).Forward(a);
    auto attn = Attention(qkv, batch.sequences, length, shape_.heads, c ? &c->probs : nullptr);
    AddInPlace(h, this->linear(ids.proj).Forward(attn));
    if (c) c->h_mid = h;
    auto bn = LayerNorm(h, this->param(ids.ln2_gain).value, this->param(ids.ln2_bias).value, c ? &c->xhat2 : nullptr,
                        c ? &c->rstd2 : nullptr);
    auto u = this->linear(ids.fc1).Forward(bn);
    DenseMatrix<T> g = u;
    for (T& v : g.values()) v = GeluValue(v);
    AddInPlace(h, this->linear(ids.fc2).Forward(g));
    if (c) {
      c->a = std::move(a);
      c->qkv = std::move(qkv);
      c->attn = std::move(attn);
      c->b = std::move(bn);
      c->u = std::move(u);
      c->g = std::move(g);
    }
  }
  auto z = LayerNorm(h, this->param(lnf_gain_).value, this->param(lnf_bias_).value, cache ? &cache->xhatf : nullptr,
                     cache ? &cache->rstdf : nullptr);
  auto logits = this->linear(head_).Forward(z);
  if (cache) cache->z = std::move(z);
  return logits;
}

template <typename T>
DenseMatrix<T> TinyLm<T>::Output(const Batch<T>& batch) const {
  return Logits(batch, nullptr);
}

template <typename T>
double TinyLm<T>::Evaluate(const Batch<T>& batch) const {
  const auto targets = Targets(batch);
  return CrossEntropy<T>(Logits(batch, nullptr), targets, nullptr);
}

template <typename T>
double TinyLm<T>::ForwardBackward(const Batch<T>& batch, InputGradMode mode) {
  for (auto& p : this->params()) p.param.ZeroGrad();
  Cache cache;
  const auto logits = Logits(batch, &cache);
  const auto targets = Targets(batch);
  DenseMatrix<T> dlogits;
  const double loss = CrossEntropy<T>(logits, targets, &dlogits);

  const std::size_t length = batch.length;
  auto dz = this->linear(head_).Backward(cache.z, dlogits, mode);
  auto& gf = this->param(lnf_gain_);
  auto& bf = this->param(lnf_bias_);
  DenseMatrix<T> dh = LayerNormBackward(dz, cache.xhatf, cache.rstdf, gf.value, gf.grad, bf.grad);
  for (std::size_t bi = shape_.blocks; bi-- > 0;) {
    const BlockIds& ids = block_ids_[bi];
    const BlockCache& c = cache.blocks[bi];
    auto du = this->linear(ids.fc2).Backward(c.g, dh, mode);
    for (std::size_t i = 0; i < du.size(); ++i) du.values()[i] *= GeluSlope(c.u.values()[i]);
    const auto db = this->linear(ids.fc1).Backward(c.b, du, mode);
    auto& g2 = this->param(ids.ln2_gain);
    auto& b2 = this->param(ids.ln2_bias);
    AddInPlace(dh, LayerNormBackward(db, c.xhat2, c.rstd2, g2.value, g2.grad, b2.grad));
    const auto dattn = this->linear(ids.proj).Backward(c.attn, dh, mode);
    const auto dqkv = AttentionBackward(dattn, c.qkv, c.probs, batch.sequences, length, shape_.heads);
    const auto da = this->linear(ids.qkv).Backward(c.a, dqkv, mode);
    auto& g1 = this->param(ids.ln1_gain);
    auto& b1 = this->param(ids.ln1_bias);
    AddInPlace(dh, LayerNormBackward(da, c.xhat1, c.rstd1, g1.value, g1.grad, b1.grad));
  }
  auto& tok = this->param(tok_emb_).grad;
  auto& pos = this->param(pos_emb_).grad;
  for (std::size_t s = 0; s < batch.sequences; ++s)
    for (std::size_t t = 0; t < length; ++t) {
      const std::uint32_t id = batch.tokens[s * (length + 1) + t];
      const auto g = dh.row(s * length + t);
      for (std::size_t j = 0; j < shape_.hidden; ++j) {
        tok(id, j) += g[j];
        pos(t, j) += g[j];
      }
    }
  return loss;
}

template class Model<float>;
template class Model<double>;
template class MlpModel<float>;
template class MlpModel<double>;
template class TinyLm<float>;
template class TinyLm<double>;
template LinearModule<float> MakeLinear(DenseMatrix<float>, DenseMatrix<float>, const SparsitySpec&, LinearRole,
                                        std::size_t, std::size_t, bool, std::uint64_t);
template LinearModule<double> MakeLinear(DenseMatrix<double>, DenseMatrix<double>, const SparsitySpec&, LinearRole,
                                         std::size_t, std::size_t, bool, std::uint64_t);
template double CrossEntropy(const DenseMatrix<float>&, std::span<const std::uint32_t>, DenseMatrix<float>*);
template double CrossEntropy(const DenseMatrix<double>&, std::span<const std::uint32_t>, DenseMatrix<double>*);

}  // namespace nmslope
