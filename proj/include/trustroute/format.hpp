#pragma once

// Locale-independent number formatting shared by every text output.

#include <string>
#include <string_view>

namespace trustroute {

// Shortest general form with at most `digits` significant digits.
std::string format_double(double v, int digits = 9);

// Round-trip exact (17 significant digits).
std::string format_exact(double v);

// Whole-string parse; throws ParseError on trailing garbage.
double parse_double(std::string_view s);

}  // namespace trustroute
