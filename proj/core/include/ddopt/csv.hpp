#pragma once

#include <charconv>
#include <string>

namespace ddopt {

// Shortest round-trip representation, locale independent. Keeps CSV output
// byte-stable across runs.
inline void append_double(std::string& out, double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, res.ptr);
}

inline std::string double_to_string(double x) {
  std::string s;
  append_double(s, x);
  return s;
}

}  // namespace ddopt
