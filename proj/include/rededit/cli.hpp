#pragma once

#include <ostream>
#include <span>
#include <string>

namespace rededit {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitDomainError = 1, kExitUsage = 2 };

/// Run the `rededit` command line. args excludes the program name. Domain
/// errors are written to err as one line of JSON.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace rededit
