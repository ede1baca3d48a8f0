#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace msnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

/// Runs one command. `args` excludes the program name. Exit codes: 0 success,
/// 1 data or I/O error, 2 configuration or usage error, 3 numeric abort.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace msnet::cli
