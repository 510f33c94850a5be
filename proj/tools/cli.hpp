#pragma once

#include <string>
#include <vector>

namespace uaopose::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kMissingInput = 3,
  kConfigMismatch = 4,
  kIo = 5,
};

// Runs one `uaopose <command> ...` invocation; args exclude the program name.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace uaopose::cli
