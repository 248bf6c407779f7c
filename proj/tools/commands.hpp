#pragma once

#include <iosfwd>

namespace ranknet::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

/// Parses the arguments and runs one subcommand. Errors are reported on
/// `err` and mapped to an exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ranknet::cli
