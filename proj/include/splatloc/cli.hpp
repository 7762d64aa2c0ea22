// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>

namespace splatloc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;  // usage, configuration, data or I/O error
inline constexpr int kExitLocalizationFailed = 2;

/// Build description printed by `--version`.
std::string version_string();

/// The `splatloc` command-line tool: subcommands synth, train, eval,
/// localize, refine and render. Returns the process exit code. Usage and
/// results go to `out`, the human log to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace splatloc
