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

#include <ostream>

namespace nmslope {

// Exit codes of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitDivergence = 3,
  kExitIo = 4,
};

// Runs one subcommand (train, verify-lemma, verify-theorem, report-memory,
// report-flops, bench-spmm, sweep-mixed-nm). Failures print a single JSON
// line {"error": kind, "exit_code": n, "message": text} to `err`.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nmslope
