#pragma once

#include <string>
#include <vector>

namespace simrec::cli {

/// Dispatches one subcommand. Exit codes: 0 success, 1 usage/config error,
/// 2 data or numerical error. Callable in-process by tests.
int run(const std::vector<std::string>& args);

int run(int argc, const char* const* argv);

}  // namespace simrec::cli
