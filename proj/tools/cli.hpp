#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cumix::cli {

/// Process exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kConfigError = 2;
inline constexpr int kDataError = 3;

/// Runs the command line `args` (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cumix::cli
