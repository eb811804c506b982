#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace activerag::cli {

// Stable process exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeFailure = 1;
inline constexpr int kInputError = 2;
inline constexpr int kIntegrityError = 3;

/// Parses `args` (without the program name) and dispatches to the
/// index / run / eval / analyze / templates / doctor handlers.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace activerag::cli
