#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mte::cli {

enum ExitCode : int {
  kOk = 0,
  kEstimationError = 2,
  kIoError = 3,
  kUsageError = 64,
};

/// Entry point shared by the executable and in-process tests. The result
/// document goes to `out`; logs, warnings and error objects go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mte::cli
