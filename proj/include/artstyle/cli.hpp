#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace artstyle {

enum ExitCode : int {
  kExitSuccess = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitRuntime = 3,
};

/// Runs one CLI invocation. `args` excludes the program name. Failures print
/// a single JSON line {"error": kind, "message": ...} on `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace artstyle
