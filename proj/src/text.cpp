#include "moralclip/text.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>

#include "moralclip/errors.hpp"

namespace moralclip {

// Shortest text that parses back to the same double.
std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_real(std::string_view s, std::string_view what) {
  const std::string tmp(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size() || errno == ERANGE) {
    throw ValidationError(std::string(what) + ": '" + tmp + "' is not a number");
  }
  return v;
}

std::uint64_t parse_unsigned(std::string_view s, std::string_view what) {
  const std::string tmp(s);
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(tmp.c_str(), &end, 10);
  if (tmp.empty() || tmp[0] == '-' || end != tmp.c_str() + tmp.size() || errno == ERANGE) {
    throw ValidationError(std::string(what) + ": '" + tmp + "' is not a non-negative integer");
  }
  return v;
}

bool parse_bool(std::string_view s, std::string_view what) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ValidationError(std::string(what) + ": '" + std::string(s) + "' is not a boolean");
}

}  // namespace moralclip
