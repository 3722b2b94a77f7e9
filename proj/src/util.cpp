#include "sde/util.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>

#ifndef SDE_BUILD_ID
#define SDE_BUILD_ID "unknown"
#endif

namespace sde {

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string iso_utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool dyadic_steps(double T, int level, std::int64_t* steps) {
  if (!(T > 0.0) || level < 0 || level > 62) return false;
  const double scaled = std::ldexp(T, level);
  if (!(scaled >= 1.0) || scaled > 9.0e15) return false;
  const double rounded = std::nearbyint(scaled);
  if (scaled != rounded) return false;
  if (steps) *steps = static_cast<std::int64_t>(rounded);
  return true;
}

const char* build_id() { return SDE_BUILD_ID; }

}  // namespace sde
