#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace glmmd::cli {

/// Exit codes of the command-line driver.
enum ExitCode : int {
  kOk = 0,
  kIoOrSchema = 1,
  kDomainOrPrecondition = 2,
  kNotConverged = 3,
};

/// Runs `glmmd <command> [flags]`. `args` excludes the program name.
/// Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace glmmd::cli
