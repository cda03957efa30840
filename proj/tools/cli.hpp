#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace crt::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsage = 1,
  kWarnings = 2,
  kBridgeFailure = 3,
};

// Runs the command line (without the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crt::cli
