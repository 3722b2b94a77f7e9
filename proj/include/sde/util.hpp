#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sde {

// Bad user input (config files, parameter ranges, malformed suites).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A computation that started from valid input but lost its footing
// (failed gradient check, degenerate fit, all paths invalid, ...).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem trouble around artifacts (unreadable config, unwritable out).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 17 significant digits: round-trips any finite double exactly.
std::string fmt_g17(double v);

std::string iso_utc_now();

// True iff T is a positive integer multiple of 2^-level; on success
// *steps gets T*2^level.
bool dyadic_steps(double T, int level, std::int64_t* steps);

const char* build_id();

}  // namespace sde
