#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace popcomp::tools {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitNumerical = 4;

/// Parses argv and runs the selected subcommand. args[0] is the program
/// name and is ignored; an empty list prints usage.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace popcomp::tools
