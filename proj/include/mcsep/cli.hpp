// include/mcsep/cli.hpp

// Copyright 2026  The mcsep Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mcsep {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `mcsep` tool: simulate | separate | evaluate | objective
// | plotdata. `args` excludes the program name. Diagnostics go to `err`,
// reports that are not written to --out go to `out`.
int RunCli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

// Expands a `--config FILE` of `key = value` lines into flags that are not
// already given on the command line; `true` adds a bare flag, `false` drops
// it, and whitespace separates list values.
std::vector<std::string> ExpandConfig(const std::vector<std::string> &args);

}  // namespace mcsep
