#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace scr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // computational failure (divergence, degenerate input, failed assertions)
inline constexpr int kExitUsage = 2;    // bad flags, unreadable or malformed files

/// Runs one command line (without the program name). Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scr
