#pragma once

#include <string>
#include <vector>

namespace pathonet {

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs the command line (argv without the program name). Returns the
/// process exit code: 0 success, 1 usage error, 2 data/format error.
int run_cli(const std::vector<std::string>& args);

} // namespace pathonet
