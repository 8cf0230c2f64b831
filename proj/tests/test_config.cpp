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

#include <sstream>
#include <string>

#include "doctest.h"
#include "nmslope/config.hpp"
#include "nmslope/errors.hpp"

using namespace nmslope;

namespace {

TrainConfig Parse(const std::string& text) {
  std::istringstream in(text);
  return ParseConfig(in, "test.cfg");
}

std::string ErrorOf(const std::string& text) {
  try {
    Parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("parses sections, comments and blank lines") {
  const auto c = Parse(
      "# toy language model\n"
      "model.kind = lm\n"
      "model.hidden = 128   # width\n"
      "model.blocks = 4\n"
      "\n"
      "data.corpus = data/text.txt\n"
      "sparsity.pattern = 2:4,2:8\n"
      "sparsity.modules = mlp+attention\n"
      "sparsity.mask = magnitude\n"
      "adapter.rank_ratio = 0.0156\n"
      "optimizer.kind = sgd\n"
      "optimizer.lr = 2.5e-3\n"
      "optimizer.schedule = cosine\n"
      "train.iterations = 5000\n"
      "train.seed = 11\n"
      "train.precision = float64\n");
  CHECK(c.model == ModelKind::kLm);
  CHECK(c.lm.hidden == 128);
  CHECK(c.lm.blocks == 4);
  CHECK(c.corpus_path == "data/text.txt");
  CHECK(c.sparsity.enabled);
  REQUIRE(c.sparsity.block_patterns.size() == 2);
  CHECK(c.sparsity.block_patterns[1] == NmPattern(2, 8));
  CHECK(c.sparsity.modules == PrunedModules::kMlpAndAttention);
  CHECK(c.sparsity.mask_mode == MaskMode::kStaticMagnitude);
  CHECK(c.adapter.rank_ratio == 0.0156);
  CHECK(c.optimizer.kind == OptimizerKind::kSgd);
  CHECK(c.optimizer.lr == 2.5e-3);
  CHECK(c.lr_shape == LrSchedule::Shape::kCosine);
  CHECK(c.iterations == 5000);
  CHECK(c.seed == 11);
  CHECK(c.double_precision);
}

TEST_CASE("defaults apply to keys that are not given") {
  const auto c = Parse("");
  CHECK(c.model == ModelKind::kMlp);
  CHECK_FALSE(c.sparsity.enabled);
  CHECK(c.adapter.lazy_fraction == 0.01);
  CHECK_FALSE(c.optimizer.adapter_weight_decay);
  CHECK_FALSE(c.mask_seed.has_value());
}

TEST_CASE("unknown, repeated and malformed entries are errors with a line number") {
  CHECK(ErrorOf("model.kind = mlp\nmodel.colour = red\n").find("test.cfg:2: unknown key 'model.colour'") !=
        std::string::npos);
  CHECK(ErrorOf("train.seed = 1\ntrain.seed = 2\n").find("given twice") != std::string::npos);
  CHECK(ErrorOf("train.iterations 10\n").find("test.cfg:1") != std::string::npos);
  CHECK(ErrorOf("train.iterations = ten\n").find("train.iterations") != std::string::npos);
  CHECK(ErrorOf("train.batch_size = -5\n") != "");
  CHECK(ErrorOf("optimizer.lr = 1e-3x\n") != "");
  CHECK(ErrorOf("sparsity.pattern = 2:4:8\n") != "");
  CHECK(ErrorOf("sparsity.pattern = 2 : 4\n") != "");
  CHECK(ErrorOf("sparsity.mask = sometimes\n").find("random|magnitude|dynamic") != std::string::npos);
  CHECK(ErrorOf("sparsity.dense_first = yes\n") != "");
  CHECK(ErrorOf("train.precision = float16\n") != "");
  CHECK_THROWS_AS(LoadConfig("/nonexistent/run.cfg"), ConfigError);
}

TEST_CASE("canonical form round-trips") {
  const auto c = Parse(
      "model.kind = lm\nmodel.hidden = 96\nsparsity.pattern = 2:4\nsparsity.mask_seed = 99\n"
      "optimizer.lr = 0.1\ndata.noise = 0.3\nadapter.weight_decay = true\n");
  const auto text = CanonicalConfig(c);
  const auto again = Parse(text);
  CHECK(CanonicalConfig(again) == text);
  CHECK(again.mask_seed == std::optional<std::uint64_t>(99));
  CHECK(again.optimizer.lr == 0.1);
  CHECK(again.regression.noise == 0.3);
  CHECK(text.find("sparsity.pattern = 2:4\n") != std::string::npos);
}

TEST_CASE("config hash") {
  CHECK(Fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(Fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  const auto a = Parse("train.seed = 1\n");
  const auto b = Parse("# same settings\ntrain.seed=1\n");
  const auto c = Parse("train.seed = 2\n");
  CHECK(ConfigHash(a) == ConfigHash(b));
  CHECK(ConfigHash(a) != ConfigHash(c));
  CHECK(ConfigHash(a).size() == 16);
}
