#pragma once

#include <ostream>

namespace dialect_lab::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // validation or runtime failure
inline constexpr int kExitUsage = 2;    // unknown command or flag

/// Runs one command line (argv[0] is the program name). Results go to
/// `out`, progress and diagnostics to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dialect_lab::cli
