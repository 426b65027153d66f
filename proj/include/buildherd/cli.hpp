#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace buildherd {

// Exit codes: 0 success, 1 operation failure, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// `args[0]` is the program name. Subcommands: serve, build, classify, status,
// history, simulate.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace buildherd
