#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace skelnav::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitBadInput = 2;
inline constexpr int kExitBackend = 3;

/// Entry point behind the `skelnav` binary. `args` excludes the program name.
/// Returns 0 on success, 2 for bad input, 3 when a model backend failed.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace skelnav::cli
