#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace glomseg::cli {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Runs the command line `args` (without the program name). Normal output
/// goes to `out`; each failure is one line on `err` of the form
/// `glomseg: error[<kind>]: <message>`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace glomseg::cli
