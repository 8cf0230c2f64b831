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

#include "nmslope/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "nmslope/compressed.hpp"
#include "nmslope/errors.hpp"

namespace nmslope {

namespace {

template <typename T>
NmCompressed<T> PackDense(const DenseMatrix<T>& dense) {
  const NmMask all(dense.rows(), dense.cols(), NmPattern(1, 1), Grouping::kRowWise,
                   std::vector<std::uint8_t>(dense.size(), 1));
  return Compress(dense, all);
}

template <typename T>
class Writer {
 public:
  explicit Writer(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void Add(const std::string& name, const NmCompressed<T>& packed, bool nm) {
    CheckpointEntry e;
    e.name = name;
    e.file = name + ".nmc1";
    e.storage = nm ? "nm" : "dense";
    e.rows = packed.rows();
    e.cols = packed.cols();
    e.pattern = packed.pattern().ToString();
    SaveNmc1((dir_ / e.file).string(), packed);
    entries_.push_back(std::move(e));
  }
  void AddDense(const std::string& name, const DenseMatrix<T>& dense) {
    if (!dense.empty()) Add(name, PackDense(dense), false);
  }

  std::vector<CheckpointEntry> Finish() {
    nlohmann::ordered_json manifest;
    manifest["format"] = "NMC1";
    manifest["dtype"] = sizeof(T) == 4 ? "float32" : "float64";
    auto& list = manifest["tensors"] = nlohmann::ordered_json::array();
    for (const auto& e : entries_)
      list.push_back({{"name", e.name},
                      {"file", e.file},
                      {"storage", e.storage},
                      {"rows", e.rows},
                      {"cols", e.cols},
                      {"pattern", e.pattern}});
    const auto path = dir_ / "manifest.json";
    std::ofstream out(path, std::ios::binary);
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("cannot write " + path.string());
    return entries_;
  }

 private:
  std::filesystem::path dir_;
  std::vector<CheckpointEntry> entries_;
};

}  // namespace

template <typename T>
std::vector<CheckpointEntry> SaveCheckpoint(const Model<T>& model, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir + ": " + ec.message());
  Writer<T> w(dir);
  for (const auto& p : model.params()) w.AddDense(p.name, p.param.value);
  for (const auto& l : model.linears()) {
    if (const auto* s = l.module.sparse()) {
      w.Add(l.name + ".weight", s->w_fwd(), true);
      w.AddDense(l.name + ".bias", s->bias());
      if (s->adapter_active()) {
        w.AddDense(l.name + ".adapter_up", s->adapters().up);
        w.AddDense(l.name + ".adapter_down", s->adapters().down);
      }
    } else if (const auto* d = l.module.dense()) {
      w.AddDense(l.name + ".weight", d->weight());
      w.AddDense(l.name + ".bias", d->bias());
    } else if (const auto* y = l.module.dynamic()) {
      w.Add(l.name + ".weight", Compress(y->shadow_weight(), y->mask()), true);
      w.AddDense(l.name + ".shadow_weight", y->shadow_weight());
      w.AddDense(l.name + ".bias", y->bias());
    }
  }
  return w.Finish();
}

template std::vector<CheckpointEntry> SaveCheckpoint(const Model<float>&, const std::string&);
template std::vector<CheckpointEntry> SaveCheckpoint(const Model<double>&, const std::string&);

}  // namespace nmslope
