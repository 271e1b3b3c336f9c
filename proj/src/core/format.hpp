#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace fbsde {

// Shortest round-trip decimal, '.' separator, independent of locale.
inline std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline void append_number(std::string& out, double value) {
  if (!std::isfinite(value)) {
    out += format_number(value);
    return;
  }
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, res.ptr);
}

}  // namespace fbsde
