#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace unifex::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand. args excludes the program name.
/// Returns 0 on success, 2 on usage errors, 1 on runtime errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unifex::cli
