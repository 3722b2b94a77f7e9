#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sde/rng.hpp"

namespace sde::brownian {

inline constexpr int kMaxLevel = 30;

// Brownian values on the dyadic grid {k 2^-n : k = 0..T*2^n}, refinable in
// place to level n+1 by bridge midpoints. Values at surviving grid points
// are preserved bitwise across refinement.
struct DyadicPath {
  int level = 0;
  double T = 1.0;  // positive integer multiple of 2^-level
  int m = 1;       // components
  rng::Stream stream;  // seed lineage (master seed, stream id)
  std::vector<double> values;  // (steps+1) x m row-major; values[0..m-1] = 0

  std::int64_t steps() const {
    return static_cast<std::int64_t>(values.size()) / m - 1;
  }
  double value(std::int64_t k, int c = 0) const { return values[k * m + c]; }
};

// Deterministic draw addressing. kind 0 = level increments, kind 1 = bridge
// midpoints; the two classes never collide, and refinement order is
// immaterial because each midpoint owns a fixed counter. Exposed so tests
// can replay individual draws.
std::uint64_t draw_counter(int kind, int level, int comp, std::int64_t index);

DyadicPath sample_path(const rng::Stream& s, double T, int level, int m);
void sample_path_into(const rng::Stream& s, double T, int level, int m,
                      DyadicPath& out);

// Level n -> n+1 in place: midpoint = (left+right)/2 + N(0, 2^-(n+2)).
void refine(DyadicPath& p);

// Copy of p downsampled to a coarser level (stride 2^(p.level-level)).
DyadicPath restricted(const DyadicPath& p, int level);

// values[k+1] - values[k] into out[0..m).
void increment(const DyadicPath& p, std::int64_t k, double* out);

// Binary dump: little-endian int64 header (level, T numerator = T*2^level,
// m) then the value matrix as 8-byte doubles row-major.
void dump(const DyadicPath& p, const std::string& file);
DyadicPath load(const std::string& file, const rng::Stream& lineage);

}  // namespace sde::brownian
