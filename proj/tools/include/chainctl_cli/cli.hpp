#pragma once

// chainctl command line. Exit codes: 0 success, 1 usage or validation
// error, 2 numerical failure, 3 certification failure.

#include <iosfwd>

namespace chainctl::cli {

enum ExitCode : int { ok = 0, usage = 1, numerical = 2, certification = 3 };

/// Parses and runs one command; the JSON report goes to `out`, diagnostics
/// and usage text to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace chainctl::cli
