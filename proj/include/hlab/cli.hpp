// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace hlab {

/// Full command-line entry point: parses argv, dispatches the subcommand,
/// and maps failures to exit codes (0 success, 1 runtime, 2 usage/config).
/// Exposed as a function so the test suite can drive the binary in-process.
int run_cli(const std::vector<std::string>& args);

}  // namespace hlab
