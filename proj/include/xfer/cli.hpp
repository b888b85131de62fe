#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xfer {

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr const char* kFormatVersions = "array npy-1.0-subset, manifest v1, score-table v1, report v1";

inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 1;
inline constexpr int kExitUsage = 2;

// Runs one command line (without the program name). Output goes to `out`,
// diagnostics to `err`.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace xfer
