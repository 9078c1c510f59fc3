#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mdepth::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,      // a check command found a failure, or an unexpected error
  kConfigError = 2,  // bad arguments or configuration
  kDataError = 3,    // unreadable or inconsistent data, checkpoints or images
  kShapeError = 4,   // image size violates the network's divisibility constraint
};

/// Parses and runs one command. Progress goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdepth::cli
