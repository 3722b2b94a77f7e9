#include "sde/rng.hpp"

#include <cassert>
#include <cmath>

namespace sde::rng {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

// One Box-Muller transform for counter pair (2p, 2p+1). Kept out-of-line so
// the bulk loop in fill_normals cannot be auto-vectorized into SIMD math
// routines that round differently from the scalar calls used here; both
// entry points must produce bitwise-identical draws.
__attribute__((noinline)) void normal_pair(const Stream& s, std::uint64_t p,
                                           double* even, double* odd) {
  const double u1 = uniform01(s, 4 * p);
  const double u2 = uniform01(s, 4 * p + 1);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = kTwoPi * u2;
  *even = r * std::cos(th);
  *odd = r * std::sin(th);
}
}  // namespace

Stream make_stream(std::uint64_t master_seed, std::uint64_t stream_id) {
  Stream s;
  s.master_seed = master_seed;
  s.stream_id = stream_id;
  s.key = avalanche(avalanche(master_seed + kGamma) +
                    kGamma * avalanche(stream_id + kGamma));
  return s;
}

Stream substream(const Stream& s, std::uint64_t salt) {
  Stream c;
  c.master_seed = s.master_seed;
  c.stream_id = avalanche(s.stream_id + kGamma * (salt + 1));
  c.key = avalanche(s.key + kGamma * avalanche(salt + kGamma));
  return c;
}

double normal(const Stream& s, std::uint64_t counter) {
  double even, odd;
  normal_pair(s, counter >> 1, &even, &odd);
  return (counter & 1) ? odd : even;
}

void fill_normals(const Stream& s, std::uint64_t counter0, std::int64_t count,
                  double* out) {
  assert((counter0 & 1) == 0 && "pair grouping requires an even base");
  if (count <= 0) return;
  const std::uint64_t pair0 = counter0 >> 1;
  const std::int64_t npair = count / 2;
  for (std::int64_t t = 0; t < npair; ++t)
    normal_pair(s, pair0 + static_cast<std::uint64_t>(t), out + 2 * t,
                out + 2 * t + 1);
  if (count & 1) {
    double even, odd;
    normal_pair(s, (counter0 >> 1) + static_cast<std::uint64_t>(npair), &even,
                &odd);
    out[count - 1] = even;
  }
}

}  // namespace sde::rng
