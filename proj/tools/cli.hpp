#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace connkit::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;  // validation, parse or I/O failure
inline constexpr int kUsage = 2;

// Runs one invocation. `args` excludes the program name. Data goes to `out`,
// logs and usage text to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace connkit::cli
