#pragma once

#include <string>
#include <vector>

namespace amoc {

// Dispatches one subcommand (args exclude the program name). Returns the
// process exit code: 0 on success, 2 for configuration/usage problems,
// 1 for runtime failures. Never throws.
int run_command(const std::vector<std::string>& args);

}  // namespace amoc
