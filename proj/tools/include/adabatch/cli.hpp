#pragma once

#include <iosfwd>

namespace adabatch {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitValidation = 2,
  kExitDivergence = 3,
  kExitVerification = 4,
};

/// Entry point of the `adabatch` tool; all output goes to the given streams.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace adabatch
