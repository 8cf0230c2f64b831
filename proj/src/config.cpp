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

#include "nmslope/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string_view>
#include <vector>

#include "nmslope/errors.hpp"

namespace nmslope {

namespace {

std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename N>
N ParseNumber(std::string_view text) {
  N value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) throw ConfigError("expected a number, got '" + std::string(text) + "'");
  return value;
}

std::size_t ParseCount(std::string_view text) { return ParseNumber<std::size_t>(text); }

bool ParseBool(std::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError("expected true or false, got '" + std::string(text) + "'");
}

template <typename N>
std::string Format(N value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string FormatBool(bool v) { return v ? "true" : "false"; }

// Bidirectional mapping between an enum and its config spelling.
template <typename E>
struct EnumNames {
  std::vector<std::pair<E, std::string_view>> names;

  E Parse(std::string_view text) const {
    for (const auto& [value, name] : names)
      if (name == text) return value;
    std::string options;
    for (const auto& [value, name] : names) options += (options.empty() ? "" : "|") + std::string(name);
    throw ConfigError("expected one of " + options + ", got '" + std::string(text) + "'");
  }
  std::string Name(E value) const {
    for (const auto& [v, name] : names)
      if (v == value) return std::string(name);
    return "?";
  }
};

const EnumNames<ModelKind> kModelKinds{{{ModelKind::kMlp, "mlp"}, {ModelKind::kLm, "lm"}}};
const EnumNames<PrunedModules> kModules{
    {{PrunedModules::kMlpOnly, "mlp"}, {PrunedModules::kMlpAndAttention, "mlp+attention"}}};
const EnumNames<MaskMode> kMaskModes{{{MaskMode::kStaticRandom, "random"},
                                      {MaskMode::kStaticMagnitude, "magnitude"},
                                      {MaskMode::kDynamic, "dynamic"}}};
const EnumNames<OptimizerKind> kOptimizers{{{OptimizerKind::kSgd, "sgd"}, {OptimizerKind::kAdam, "adam"}}};
const EnumNames<LrSchedule::Shape> kSchedules{
    {{LrSchedule::Shape::kConstant, "constant"}, {LrSchedule::Shape::kCosine, "cosine"}}};
const EnumNames<InputGradMode> kInputGrads{
    {{InputGradMode::kDoublePruned, "double-pruned"}, {InputGradMode::kExact, "exact"}}};

// "none", a single "N:M", or a comma-separated list applied to equal
// consecutive runs of blocks.
void ParsePatterns(std::string_view text, SparsitySpec& s) {
  s.block_patterns.clear();
  s.enabled = text != "none";
  if (!s.enabled) return;
  while (true) {
    const auto comma = text.find(',');
    const auto item = text.substr(0, comma);
    try {
      s.block_patterns.push_back(NmPattern::Parse(item));
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
}

std::string FormatPatterns(const SparsitySpec& s) {
  if (!s.enabled) return "none";
  std::string out;
  for (const auto& p : s.block_patterns) out += (out.empty() ? "" : ",") + p.ToString();
  return out;
}

struct Field {
  std::string key;
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define NMSLOPE_NUMBER_FIELD(key, member, type)                                           \
  Field {                                                                                  \
    key, [](TrainConfig& c, std::string_view v) { c.member = ParseNumber<type>(v); },      \
        [](const TrainConfig& c) { return Format(c.member); }                              \
  }
#define NMSLOPE_ENUM_FIELD(key, member, names)                                            \
  Field {                                                                                  \
    key, [](TrainConfig& c, std::string_view v) { c.member = names.Parse(v); },           \
        [](const TrainConfig& c) { return names.Name(c.member); }                          \
  }
#define NMSLOPE_BOOL_FIELD(key, member)                                                   \
  Field {                                                                                  \
    key, [](TrainConfig& c, std::string_view v) { c.member = ParseBool(v); },             \
        [](const TrainConfig& c) { return FormatBool(c.member); }                          \
  }

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields{
      NMSLOPE_ENUM_FIELD("model.kind", model, kModelKinds),
      NMSLOPE_NUMBER_FIELD("model.d_in", mlp.d_in, std::size_t),
      NMSLOPE_NUMBER_FIELD("model.d_out", mlp.d_out, std::size_t),
      NMSLOPE_NUMBER_FIELD("model.context", lm.context, std::size_t),
      // Hidden width of whichever model is selected.
      Field{"model.hidden",
            [](TrainConfig& c, std::string_view v) { c.mlp.hidden = c.lm.hidden = ParseCount(v); },
            [](const TrainConfig& c) { return Format(c.model == ModelKind::kMlp ? c.mlp.hidden : c.lm.hidden); }},
      NMSLOPE_NUMBER_FIELD("model.heads", lm.heads, std::size_t),
      NMSLOPE_NUMBER_FIELD("model.blocks", lm.blocks, std::size_t),
      NMSLOPE_NUMBER_FIELD("model.mlp_ratio", lm.mlp_ratio, std::size_t),
      Field{"data.corpus", [](TrainConfig& c, std::string_view v) { c.corpus_path = std::string(v); },
            [](const TrainConfig& c) { return c.corpus_path; }},
      NMSLOPE_NUMBER_FIELD("data.validation_fraction", validation_fraction, double),
      NMSLOPE_NUMBER_FIELD("data.teacher_hidden", regression.teacher_hidden, std::size_t),
      NMSLOPE_NUMBER_FIELD("data.noise", regression.noise, double),
      Field{"sparsity.pattern", [](TrainConfig& c, std::string_view v) { ParsePatterns(v, c.sparsity); },
            [](const TrainConfig& c) { return FormatPatterns(c.sparsity); }},
      NMSLOPE_ENUM_FIELD("sparsity.modules", sparsity.modules, kModules),
      NMSLOPE_ENUM_FIELD("sparsity.mask", sparsity.mask_mode, kMaskModes),
      NMSLOPE_BOOL_FIELD("sparsity.dense_first", sparsity.dense_first),
      Field{"sparsity.mask_seed",
            [](TrainConfig& c, std::string_view v) {
              if (v == "auto") c.mask_seed.reset();
              else c.mask_seed = ParseNumber<std::uint64_t>(v);
            },
            [](const TrainConfig& c) { return c.mask_seed ? Format(*c.mask_seed) : std::string("auto"); }},
      NMSLOPE_NUMBER_FIELD("sparsity.dynamic_decay", sparsity.dynamic_decay, double),
      NMSLOPE_NUMBER_FIELD("adapter.rank_ratio", adapter.rank_ratio, double),
      NMSLOPE_NUMBER_FIELD("adapter.lazy_fraction", adapter.lazy_fraction, double),
      NMSLOPE_BOOL_FIELD("adapter.weight_decay", optimizer.adapter_weight_decay),
      NMSLOPE_BOOL_FIELD("adapter.paired_control", adapter.paired_control),
      NMSLOPE_ENUM_FIELD("optimizer.kind", optimizer.kind, kOptimizers),
      NMSLOPE_NUMBER_FIELD("optimizer.lr", optimizer.lr, double),
      NMSLOPE_NUMBER_FIELD("optimizer.beta1", optimizer.beta1, double),
      NMSLOPE_NUMBER_FIELD("optimizer.beta2", optimizer.beta2, double),
      NMSLOPE_NUMBER_FIELD("optimizer.eps", optimizer.eps, double),
      NMSLOPE_NUMBER_FIELD("optimizer.weight_decay", optimizer.weight_decay, double),
      NMSLOPE_NUMBER_FIELD("optimizer.grad_scale", optimizer.grad_scale, double),
      NMSLOPE_ENUM_FIELD("optimizer.schedule", lr_shape, kSchedules),
      NMSLOPE_NUMBER_FIELD("optimizer.warmup", warmup, std::int64_t),
      NMSLOPE_NUMBER_FIELD("train.iterations", iterations, std::int64_t),
      NMSLOPE_NUMBER_FIELD("train.batch_size", batch_size, std::size_t),
      NMSLOPE_NUMBER_FIELD("train.seed", seed, std::uint64_t),
      NMSLOPE_ENUM_FIELD("train.input_grad", input_grad, kInputGrads),
      Field{"train.precision",
            [](TrainConfig& c, std::string_view v) {
              if (v == "float32") c.double_precision = false;
              else if (v == "float64") c.double_precision = true;
              else throw ConfigError("expected float32 or float64, got '" + std::string(v) + "'");
            },
            [](const TrainConfig& c) { return std::string(c.double_precision ? "float64" : "float32"); }},
      NMSLOPE_NUMBER_FIELD("report.eval_batches", eval_batches, std::size_t),
      NMSLOPE_NUMBER_FIELD("report.eval_batch_size", eval_batch_size, std::size_t),
      NMSLOPE_NUMBER_FIELD("report.mask_log_every", mask_log_every, std::size_t),
  };
  return fields;
}

#undef NMSLOPE_NUMBER_FIELD
#undef NMSLOPE_ENUM_FIELD
#undef NMSLOPE_BOOL_FIELD

}  // namespace

TrainConfig ParseConfig(std::istream& in, const std::string& source) {
  std::map<std::string_view, const Field*> by_key;
  for (const auto& f : Fields()) by_key.emplace(f.key, &f);
  TrainConfig config;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = Trim(text);
    if (text.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key(Trim(text.substr(0, eq)));
    const std::string_view value = Trim(text.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    try {
      it->second->set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  return config;
}

TrainConfig LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return ParseConfig(in, path);
}

std::string CanonicalConfig(const TrainConfig& config) {
  std::ostringstream out;
  for (const auto& f : Fields()) out << f.key << " = " << f.get(config) << '\n';
  return out.str();
}

std::uint64_t Fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string ConfigHash(const TrainConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(Fnv1a64(CanonicalConfig(config))));
  return buf;
}

}  // namespace nmslope
