#pragma once

// Number <-> text helpers shared by CSV output, config parsing and container
// metadata. Doubles print as the shortest decimal that reads back bit-exact.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rfusion {

/// Shortest round-trip decimal; "inf", "-inf" and "nan" for non-finite values.
std::string format_number(double x);
std::string format_number(std::uint64_t x);

/// Comma-free list joined by `sep`.
std::string join_numbers(std::span<const double> xs, std::string_view sep = ",");
std::string join_numbers(std::span<const std::size_t> xs, std::string_view sep = ",");

/// Strict parsers: the whole token must be consumed. `what` names the value in
/// the ConfigError raised on failure. Doubles accept inf, -inf, +inf.
double parse_double(std::string_view s, std::string_view what);
std::uint64_t parse_uint(std::string_view s, std::string_view what);
bool parse_bool(std::string_view s, std::string_view what);

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

}  // namespace rfusion
