#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace copula_rank::cli {

/// Exit codes: 0 success, 2 usage or domain error, 3 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Runs one invocation. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace copula_rank::cli
