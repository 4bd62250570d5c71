#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace chaosflow::csv {

/// Fixed 17-significant-digit rendering; identical inputs give identical bytes.
inline std::string num(double v) {
  if (v == 0.0) v = 0.0;  // fold -0
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace chaosflow::csv
