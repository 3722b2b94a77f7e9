#include "sde/brownian.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include "sde/util.hpp"

namespace sde::brownian {

static_assert(std::endian::native == std::endian::little,
              "path dumps assume a little-endian host");

std::uint64_t draw_counter(int kind, int level, int comp, std::int64_t index) {
  // kind(1) | level(6) | comp(8) | index(47); stays below 2^62 so the
  // uniform addressing inside rng (4 * pair) cannot overflow. index low
  // bits keep increment ranges contiguous and pair-aligned.
  return (static_cast<std::uint64_t>(kind) << 61) |
         (static_cast<std::uint64_t>(level) << 55) |
         (static_cast<std::uint64_t>(comp) << 47) |
         static_cast<std::uint64_t>(index);
}

namespace {

thread_local std::vector<double> g_scratch;

void check_geometry(double T, int level, int m, std::int64_t* steps) {
  if (level < 0 || level > kMaxLevel)
    throw ConfigError("path level must be in [0, 30]");
  if (m < 1 || m > 255) throw ConfigError("path dimension m must be in [1, 255]");
  if (!dyadic_steps(T, level, steps))
    throw ConfigError("T must be a positive integer multiple of 2^-n");
}

}  // namespace

void sample_path_into(const rng::Stream& s, double T, int level, int m,
                      DyadicPath& out) {
  std::int64_t steps = 0;
  check_geometry(T, level, m, &steps);
  out.level = level;
  out.T = T;
  out.m = m;
  out.stream = s;
  out.values.assign(static_cast<std::size_t>(steps + 1) * m, 0.0);
  const double scale = std::sqrt(std::ldexp(1.0, -level));
  g_scratch.resize(static_cast<std::size_t>(steps));
  for (int c = 0; c < m; ++c) {
    rng::fill_normals(s, draw_counter(0, level, c, 0), steps,
                      g_scratch.data());
    double w = 0.0;
    double* v = out.values.data() + c;
    for (std::int64_t k = 0; k < steps; ++k) {
      w += scale * g_scratch[static_cast<std::size_t>(k)];
      v[(k + 1) * m] = w;
    }
  }
}

DyadicPath sample_path(const rng::Stream& s, double T, int level, int m) {
  DyadicPath p;
  sample_path_into(s, T, level, m, p);
  return p;
}

void refine(DyadicPath& p) {
  if (p.level + 1 > kMaxLevel) throw ConfigError("refinement beyond level 30");
  const std::int64_t K = p.steps();
  const int m = p.m;
  const int nl = p.level + 1;
  // conditional variance of the midpoint given the endpoints is a quarter
  // of the coarse step: 2^-(level+2)
  const double scale = std::sqrt(std::ldexp(1.0, -(p.level + 2)));
  std::vector<double> nv(static_cast<std::size_t>(2 * K + 1) * m);
  for (std::int64_t k = 0; k <= K; ++k)
    std::memcpy(&nv[static_cast<std::size_t>(2 * k) * m],
                &p.values[static_cast<std::size_t>(k) * m],
                sizeof(double) * m);
  for (std::int64_t j = 0; j < K; ++j) {
    for (int c = 0; c < m; ++c) {
      const double l = p.values[static_cast<std::size_t>(j) * m + c];
      const double r = p.values[static_cast<std::size_t>(j + 1) * m + c];
      const double xi = rng::normal(p.stream, draw_counter(1, nl, c, j));
      nv[static_cast<std::size_t>(2 * j + 1) * m + c] =
          0.5 * (l + r) + scale * xi;
    }
  }
  p.values.swap(nv);
  p.level = nl;
}

DyadicPath restricted(const DyadicPath& p, int level) {
  if (level < 0 || level > p.level)
    throw ConfigError("restriction level must be in [0, path level]");
  std::int64_t steps = 0;
  if (!dyadic_steps(p.T, level, &steps))
    throw ConfigError("T is not dyadic at the requested level");
  const std::int64_t stride = std::int64_t{1} << (p.level - level);
  DyadicPath r;
  r.level = level;
  r.T = p.T;
  r.m = p.m;
  r.stream = p.stream;
  r.values.resize(static_cast<std::size_t>(steps + 1) * p.m);
  for (std::int64_t k = 0; k <= steps; ++k)
    std::memcpy(&r.values[static_cast<std::size_t>(k) * p.m],
                &p.values[static_cast<std::size_t>(k * stride) * p.m],
                sizeof(double) * p.m);
  return r;
}

void increment(const DyadicPath& p, std::int64_t k, double* out) {
  if (k < 0 || k >= p.steps()) throw ConfigError("increment index out of range");
  for (int c = 0; c < p.m; ++c)
    out[c] = p.values[static_cast<std::size_t>(k + 1) * p.m + c] -
             p.values[static_cast<std::size_t>(k) * p.m + c];
}

void dump(const DyadicPath& p, const std::string& file) {
  std::FILE* f = std::fopen(file.c_str(), "wb");
  if (!f) throw IoError("cannot open path dump file: " + file);
  std::int64_t steps = 0;
  dyadic_steps(p.T, p.level, &steps);
  const std::int64_t header[3] = {p.level, steps, p.m};
  bool ok = std::fwrite(header, sizeof(header), 1, f) == 1;
  ok = ok && std::fwrite(p.values.data(), sizeof(double), p.values.size(),
                         f) == p.values.size();
  std::fclose(f);
  if (!ok) throw IoError("short write on path dump: " + file);
}

DyadicPath load(const std::string& file, const rng::Stream& lineage) {
  std::FILE* f = std::fopen(file.c_str(), "rb");
  if (!f) throw IoError("cannot open path dump file: " + file);
  std::int64_t header[3] = {0, 0, 0};
  if (std::fread(header, sizeof(header), 1, f) != 1) {
    std::fclose(f);
    throw IoError("truncated path dump header: " + file);
  }
  DyadicPath p;
  p.level = static_cast<int>(header[0]);
  p.m = static_cast<int>(header[2]);
  const std::int64_t steps = header[1];
  if (p.level < 0 || p.level > kMaxLevel || p.m < 1 || p.m > 255 ||
      steps < 1) {
    std::fclose(f);
    throw IoError("corrupt path dump header: " + file);
  }
  p.T = std::ldexp(static_cast<double>(steps), -p.level);
  p.stream = lineage;
  p.values.resize(static_cast<std::size_t>(steps + 1) * p.m);
  const bool ok = std::fread(p.values.data(), sizeof(double), p.values.size(),
                             f) == p.values.size();
  std::fclose(f);
  if (!ok) throw IoError("truncated path dump body: " + file);
  return p;
}

}  // namespace sde::brownian
