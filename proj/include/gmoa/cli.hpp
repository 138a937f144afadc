#pragma once

#include <string>
#include <vector>

namespace gmoa::cli {

// Front end for the four subcommands (simulate, train, surface, evaluate).
// Configuration comes from a JSON document (--config) with per-flag
// overrides; the schema is validated before any computation. Exit codes:
// 0 success, 2 usage or config error, 3 numerical failure, 4 IO or format
// error.
int run_cli(int argc, const char* const* argv);

// In-process variant for tests; args exclude the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace gmoa::cli
