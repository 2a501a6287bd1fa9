// Copyright 2026 The qcontrol Authors
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

// Command-line front end. Subcommands read a JSON config, run one
// experiment and write their outputs into --out; see README.md for the
// file formats.

#include <iosfwd>
#include <string>
#include <vector>

namespace qcontrol::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalidConfig = 1;
inline constexpr int kExitNotConverged = 2;
/// Anything else: I/O failure, numerical breakdown.
inline constexpr int kExitFailure = 3;

const char* version();

/// args[0] is the program name, as in argv. Messages go to `out` / `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::string& path);

}  // namespace qcontrol::cli
