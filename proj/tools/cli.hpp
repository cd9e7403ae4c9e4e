#pragma once

#include <ostream>

namespace medfuzz::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kCorpusError = 3,
  kGatewayExhausted = 4,
  kIncompleteRun = 5,
};

// Parses argv and runs one subcommand. Results go to `out`; logs go to
// stderr.
int run(int argc, const char* const* argv, std::ostream& out);

}  // namespace medfuzz::cli
