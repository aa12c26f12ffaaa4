#include "trustroute/format.hpp"

#include <charconv>

#include "trustroute/core.hpp"

namespace trustroute {

std::string format_double(double v, int digits) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
  return std::string(buf, res.ptr);
}

std::string format_exact(double v) { return format_double(v, 17); }

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace trustroute
