#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lamar::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Runs one command line (args excludes the program name). Normal output goes
// to `out`; every error is a single line on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lamar::cli
