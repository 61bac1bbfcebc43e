#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dsparse {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitUsage = 2,
  kExitResource = 3,
};

// Runs one `dsparse` invocation. args[0] is the program name.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dsparse
