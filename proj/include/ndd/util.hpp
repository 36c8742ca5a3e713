#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ndd {

// Splits one CSV line on commas. No quoting: field values must not contain
// commas or newlines (the drive/roster/stops schemas guarantee this).
// A trailing '\r' on the line is stripped.
std::vector<std::string> split_csv(std::string_view line);

// Shortest decimal string that round-trips to the same double. Locale-free.
std::string fmt_double(double v);

// Strict numeric parsers: the whole token must be consumed, else nullopt.
std::optional<double> parse_double(std::string_view token);
std::optional<std::int64_t> parse_i64(std::string_view token);
std::optional<std::uint64_t> parse_u64(std::string_view token);

// Throwing variants for contexts where a malformed number is fatal; `what`
// names the field in the ValidationError.
double require_double(std::string_view token, const std::string& what);
std::int64_t require_i64(std::string_view token, const std::string& what);
std::uint64_t require_u64(std::string_view token, const std::string& what);

std::string_view trim(std::string_view s);

}  // namespace ndd
