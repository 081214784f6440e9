#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gssl::cli {

enum ExitCode : int {
    kSuccess = 0,
    kRuntimeError = 1,
    kUsageError = 2,
};

// Parses `args` (without the program name) and runs the requested verb.
// Never throws; failures are reported on `err` and through the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gssl::cli
