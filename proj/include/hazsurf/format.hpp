#pragma once

#include <cstdio>
#include <string>

namespace hazsurf {

// R-style significant-digit formatting (signif + print).
inline std::string fmt_sig(double x, int digits = 7) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, x);
  return buf;
}

// Shortest representation that round-trips a double through text.
inline std::string fmt_full(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace hazsurf
