#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hman::cli {

enum ExitCode : int { kSuccess = 0, kUserError = 1, kInternalError = 2 };

// Runs the `hman` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hman::cli
