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

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace nmslope {

// Worker cap for kernel-internal parallelism: NM_SLOPE_THREADS if set to a
// positive integer, otherwise the hardware concurrency. Read once.
int KernelThreads();

// Splits [0, count) into contiguous chunks and runs body(begin, end) on up
// to KernelThreads() threads. Runs inline when `work` (a rough operation
// count) is too small to amortise thread start-up.
template <typename Body>
void ParallelFor(std::size_t count, std::size_t work, Body&& body) {
  constexpr std::size_t kMinWorkPerThread = std::size_t{1} << 18;
  const auto cap = static_cast<std::size_t>(KernelThreads());
  const std::size_t threads = std::min({cap, count, std::max<std::size_t>(1, work / kMinWorkPerThread)});
  if (threads <= 1) {
    body(std::size_t{0}, count);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads - 1);
  const std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t t = 1; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin < end) pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(std::size_t{0}, std::min(count, chunk));
}

}  // namespace nmslope
