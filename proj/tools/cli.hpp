// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace evkit::cli {

// Exit codes: 0 success, 2 input or configuration error, 3 numeric or
// degenerate-geometry error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

// Runs one invocation. `args` excludes the program name. Results go to
// `out`; diagnostics go to `err` as one JSON object per line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace evkit::cli
