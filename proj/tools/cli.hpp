#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rubikssl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the rubikssl tool. Human-readable progress goes to `err`;
/// `out` receives only what a command prints on purpose (dry-run configs,
/// summaries).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rubikssl::cli
