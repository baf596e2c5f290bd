// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace morph {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Runs one command. `args` excludes the program name. Errors are reported as
// a single "error: ..." line on `err`; usage errors (bad flags, missing files,
// malformed configs) return kExitUsage, everything else kExitRuntime.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace morph
