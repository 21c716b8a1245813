#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace darthkit {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitMissingCheckpoint = 3,
  kExitSequenceMismatch = 4,
  kExitClassMismatch = 5,
};

/// Entry point of the `darthkit` tool; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace darthkit
