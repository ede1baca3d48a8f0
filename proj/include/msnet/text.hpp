#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace msnet {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
/// Whole-string decimal parse; std::nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);
/// Splits one CSV line on commas (no quoting support).
std::vector<std::string> split_csv(std::string_view line);
std::string_view trim(std::string_view text);

}  // namespace msnet
