#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rbf/error.hpp"

namespace rbf {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kOther = 1;
inline constexpr int kUsage = 2;
inline constexpr int kIo = 3;
inline constexpr int kUnknownFile = 4;
inline constexpr int kUnknownVersion = 5;
inline constexpr int kChecksumMismatch = 6;
inline constexpr int kMalformed = 7;
inline constexpr int kTimeout = 8;
inline constexpr int kEmptySelection = 9;
} // namespace exit_code

int exit_code_for(ErrorCode code) noexcept;

/// Runs one command line. `args` excludes the program name. Diagnostics go to
/// `err` as "error: <kebab-case code>: <detail>". `in` feeds `push` when no
/// --file is given.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in);

} // namespace rbf
