#pragma once

#include <cstdio>
#include <string>

namespace cocola {

/// Round-trippable decimal form of a double.
inline std::string format_full_precision(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Two-decimal rendering of a value already on the 0..100 scale.
inline std::string format_percent(double percent) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", percent);
  return buf;
}

/// Two-decimal percent rendering of a fraction in [0, 1].
inline std::string format_fraction_as_percent(double fraction) { return format_percent(fraction * 100.0); }

}  // namespace cocola
