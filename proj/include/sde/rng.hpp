#pragma once

#include <cstdint>

namespace sde::rng {

// Counter-based generator: draw j of stream s is a pure function of
// (s.key, j), so any worker can produce any draw in any order and the
// result never depends on scheduling. The mix is the splitmix64
// finalizer (xor-shift/multiply avalanche) over a Weyl sequence.
inline constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t avalanche(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Stream {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;
  std::uint64_t key = 0;  // derived; see make_stream
};

Stream make_stream(std::uint64_t master_seed, std::uint64_t stream_id);

// Child stream for (path index, experiment id, ...) fan-out.
Stream substream(const Stream& s, std::uint64_t salt);

inline std::uint64_t bits_at(const Stream& s, std::uint64_t counter) noexcept {
  return avalanche(s.key + kGamma * counter);
}

// Strictly inside (0,1): bin-centered 53-bit mantissa, so log() is finite.
inline double uniform01(const Stream& s, std::uint64_t counter) noexcept {
  return (static_cast<double>(bits_at(s, counter) >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal draw addressed by counter. Counters 2i and 2i+1 share one
// Box-Muller transform (cosine and sine branch); both margins are exact
// N(0,1) and the pair is independent, so consumers may use any subset.
double normal(const Stream& s, std::uint64_t counter);

// out[i] = normal(s, counter0 + i). counter0 must be even so the pair
// grouping matches single-draw addressing. Bulk path for hot loops.
void fill_normals(const Stream& s, std::uint64_t counter0, std::int64_t count,
                  double* out);

}  // namespace sde::rng
