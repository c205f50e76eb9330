#pragma once

#include <string>
#include <vector>

namespace objclear::cli {

/// Exit codes: 0 success or --help, 1 runtime error, 2 usage error.
int run(int argc, const char* const* argv);

int run(const std::vector<std::string>& args);

}  // namespace objclear::cli
