#pragma once

#include <string>
#include <vector>

namespace semicomp {

// Runs the command-line interface. Returns the process exit code:
// 0 success, 1 unexpected error, 2 validation error, 3 convergence failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace semicomp
