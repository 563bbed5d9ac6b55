#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wavernn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitInternalError = 2;

// Runs one command line (args[0] is the program name). Reports go to
// `out`, diagnostics and usage text to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wavernn::cli
