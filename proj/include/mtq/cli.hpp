#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mtq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Default output root for subcommands run without --out.
inline constexpr const char* kOutputRootEnv = "MTQ_OUTPUT_ROOT";

// args excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mtq::cli
