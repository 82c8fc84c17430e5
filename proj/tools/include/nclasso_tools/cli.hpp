#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nclasso::cli {

enum ExitCode : int {
    kOk = 0,
    kCheckFailed = 1,
    kUsage = 2,
    kRuntime = 3,
};

/// Runs the command line `args` (args[0] is the program name) and returns the
/// process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nclasso::cli
