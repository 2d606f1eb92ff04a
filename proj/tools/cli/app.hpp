#pragma once

#include <iosfwd>

namespace spdc::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitFormat = 3,
  kExitAnalysis = 4,
  kExitIo = 5,
};

/// Parses arguments, runs one subcommand and maps errors to exit codes.
/// Log verbosity comes from the SPDCSTAT_LOG environment variable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spdc::cli
