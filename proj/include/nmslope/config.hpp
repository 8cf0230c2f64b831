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
#include <istream>
#include <string>

#include "nmslope/trainer.hpp"

namespace nmslope {

// Flat "key = value" experiment files. Keys carry a section prefix
// (model., data., sparsity., adapter., optimizer., train., report.); '#'
// starts a comment. Unknown or repeated keys and malformed values throw
// ConfigError naming the line. See configs/README.md for the schema.
TrainConfig ParseConfig(std::istream& in, const std::string& source = "<config>");

// Reads and parses a file; a missing file is a ConfigError as well.
TrainConfig LoadConfig(const std::string& path);

// Every key with its effective value, one "key = value" line each in a fixed
// order. ParseConfig(CanonicalConfig(c)) reproduces c.
std::string CanonicalConfig(const TrainConfig& config);

// 64-bit FNV-1a.
std::uint64_t Fnv1a64(const std::string& bytes);

// Hex FNV-1a of the canonical form; identifies a run's settings.
std::string ConfigHash(const TrainConfig& config);

}  // namespace nmslope
