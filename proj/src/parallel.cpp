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

#include "nmslope/parallel.hpp"

#include <cstdlib>
#include <string>

namespace nmslope {

int KernelThreads() {
  static const int threads = [] {
    if (const char* env = std::getenv("NM_SLOPE_THREADS")) {
      try {
        const int v = std::stoi(env);
        if (v > 0) return v;
      } catch (const std::exception&) {
      }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return threads;
}

}  // namespace nmslope
