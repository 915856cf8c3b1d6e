#pragma once

#include <string>
#include <vector>

namespace vadd::cli {

/// Parses `args` (without the program name), runs the command and maps
/// errors to exit codes: 0 ok, 1 failed check, 2 usage or input error,
/// 3 numerical abort.
int run_cli(const std::vector<std::string>& args);

}  // namespace vadd::cli
