#pragma once

#include <cstdio>
#include <string>

namespace mdnu {

/// Shortest-enough fixed formatting for CSV output; stable across runs.
inline std::string fmt_real(double v, int digits = 9) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

}  // namespace mdnu
