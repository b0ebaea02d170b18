#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace moralclip {

/// Shortest "%.17g" rendering; round-trips through parse_real.
std::string format_real(double v);

/// Strict parsers: the whole field must be consumed. Throw ValidationError naming `what`.
double parse_real(std::string_view s, std::string_view what);
std::uint64_t parse_unsigned(std::string_view s, std::string_view what);
bool parse_bool(std::string_view s, std::string_view what);

}  // namespace moralclip
