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

#include <string>
#include <vector>

#include "nmslope/model.hpp"

namespace nmslope {

struct CheckpointEntry {
  std::string name;     // e.g. "block0.fc1.weight"
  std::string file;     // relative to the checkpoint directory
  std::string storage;  // "nm" for N:M-packed weights, "dense" otherwise
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string pattern;  // "N:M"; dense tensors use "1:1"
};

// Writes every tensor of `model` as one NMC1 file (dense tensors as 1:1
// packed matrices) plus manifest.json listing them in model order. Creates
// `dir` if needed; throws IoError when a file cannot be written.
template <typename T>
std::vector<CheckpointEntry> SaveCheckpoint(const Model<T>& model, const std::string& dir);

}  // namespace nmslope
