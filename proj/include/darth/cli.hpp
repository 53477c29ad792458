// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace darth::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitInfeasible = 4;

/// Parses argv (argv[0] is the program name) and runs one subcommand.
/// Returns the process exit code; never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace darth::cli
