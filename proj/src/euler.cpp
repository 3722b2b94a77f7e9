#include "sde/euler.hpp"

#include <cmath>
#include <cstring>
#include <vector>

#include "sde/accum.hpp"
#include "sde/pool.hpp"
#include "sde/util.hpp"

namespace sde::euler {

namespace {

void validate_common(const coefficients::Model& model,
                     const brownian::DyadicPath& path, int sim_level,
                     double eps, std::int64_t* steps) {
  if (model.m != path.m)
    throw ConfigError("path dimension does not match model noise dimension");
  if (sim_level < 0 || sim_level > path.level)
    throw ConfigError("sim_level must be in [0, path level]");
  if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError("epsilon must be in (0, 1]");
  if (!dyadic_steps(path.T, sim_level, steps))
    throw ConfigError("T is not dyadic at sim_level");
}

}  // namespace

void simulate_into(const coefficients::Model& model,
                   const brownian::DyadicPath& path, int sim_level,
                   const double* x0, double eps, double n_trunc,
                   Trajectory& out) {
  std::int64_t K = 0;
  validate_common(model, path, sim_level, eps, &K);
  const int d = model.d;
  for (int c = 0; c < d; ++c)
    if (!std::isfinite(x0[c])) throw ConfigError("x0 must be finite");
  const std::int64_t stride = std::int64_t{1} << (path.level - sim_level);
  const double h = std::ldexp(1.0, -sim_level);
  // sqrt(1) == 1.0, and 1.0 * w is bitwise w: the eps = 1 run coincides
  // with the unscaled recursion, and scaling the stored path by sqrt(eps)
  // up front reproduces any eps run exactly
  const double sq = std::sqrt(eps);

  out.level = sim_level;
  out.T = path.T;
  out.d = d;
  out.epsilon = eps;
  out.n_trunc = n_trunc;
  out.exit_index = -1;
  out.invalid = false;
  out.invalid_index = -1;
  out.values.resize(static_cast<std::size_t>(K + 1) * d);

  if (d == 1 && model.m == 1) {
    const double* pv = path.values.data();
    double x = x0[0];
    out.values[0] = x;
    bool frozen = false;
    if (std::fabs(x) > n_trunc) {
      out.exit_index = 0;
      frozen = true;
    }
    double wl = sq * pv[0];
    for (std::int64_t k = 0; k < K; ++k) {
      const double wr = sq * pv[(k + 1) * stride];
      if (!frozen) {
        const double dw = wr - wl;
        const double tb = model.b(x);
        const double ts = model.s(x);
        x = (x + tb * h) + ts * dw;
        if (!std::isfinite(x)) {
          out.invalid = true;
          out.invalid_index = k + 1;
          x = out.values[static_cast<std::size_t>(k)];  // last finite state
          frozen = true;
        } else if (std::fabs(x) > n_trunc) {
          out.exit_index = k + 1;
          frozen = true;
        }
      }
      out.values[static_cast<std::size_t>(k + 1)] = x;
      wl = wr;
    }
    return;
  }

  // diagonal multi-d: component c drives and is driven by noise column c
  const int m = model.m;
  std::vector<double> x(x0, x0 + d);
  std::memcpy(out.values.data(), x.data(), sizeof(double) * d);
  bool frozen = false;
  double norm2 = 0.0;
  for (int c = 0; c < d; ++c) norm2 += x[c] * x[c];
  if (norm2 > n_trunc * n_trunc) {
    out.exit_index = 0;
    frozen = true;
  }
  std::vector<double> wl(d), wr(d);
  for (int c = 0; c < d; ++c) wl[c] = sq * path.values[c];
  for (std::int64_t k = 0; k < K; ++k) {
    const double* row = &path.values[static_cast<std::size_t>((k + 1) * stride) * m];
    for (int c = 0; c < d; ++c) wr[c] = sq * row[c];
    if (!frozen) {
      bool bad = false;
      norm2 = 0.0;
      for (int c = 0; c < d; ++c) {
        const double dw = wr[c] - wl[c];
        const double tb = model.b(x[c]);
        const double ts = model.s(x[c]);
        const double xn = (x[c] + tb * h) + ts * dw;
        x[c] = xn;
        if (!std::isfinite(xn)) bad = true;
        norm2 += xn * xn;
      }
      if (bad) {
        out.invalid = true;
        out.invalid_index = k + 1;
        std::memcpy(x.data(), &out.values[static_cast<std::size_t>(k) * d],
                    sizeof(double) * d);
        frozen = true;
      } else if (norm2 > n_trunc * n_trunc) {
        out.exit_index = k + 1;
        frozen = true;
      }
    }
    std::memcpy(&out.values[static_cast<std::size_t>(k + 1) * d], x.data(),
                sizeof(double) * d);
    std::swap(wl, wr);
  }
}

Trajectory simulate(const coefficients::Model& model,
                    const brownian::DyadicPath& path, double x0, double eps,
                    double n_trunc) {
  if (model.d != 1) throw ConfigError("scalar simulate needs a 1-D model");
  Trajectory t;
  simulate_into(model, path, path.level, &x0, eps, n_trunc, t);
  return t;
}

std::pair<Trajectory, Trajectory> simulate_pair(
    const coefficients::Model& model, const brownian::DyadicPath& path,
    double x0, double y0, double eps, double n_trunc) {
  if (!model.scalar()) throw ConfigError("simulate_pair needs a scalar model");
  std::int64_t K = 0;
  validate_common(model, path, path.level, eps, &K);
  if (!std::isfinite(x0) || !std::isfinite(y0))
    throw ConfigError("x0 must be finite");
  const double h = std::ldexp(1.0, -path.level);
  const double sq = std::sqrt(eps);
  Trajectory a, b;
  for (Trajectory* t : {&a, &b}) {
    t->level = path.level;
    t->T = path.T;
    t->d = 1;
    t->epsilon = eps;
    t->n_trunc = n_trunc;
    t->values.resize(static_cast<std::size_t>(K + 1));
  }
  double xa = x0, xb = y0;
  a.values[0] = xa;
  b.values[0] = xb;
  bool frozen = false;
  if (std::fabs(xa) > n_trunc || std::fabs(xb) > n_trunc) {
    a.exit_index = b.exit_index = 0;  // joint stop, mirroring the shared
    frozen = true;                    // stopping time of the coupled system
  }
  const double* pv = path.values.data();
  double wl = sq * pv[0];
  for (std::int64_t k = 0; k < K; ++k) {
    const double wr = sq * pv[k + 1];
    if (!frozen) {
      const double dw = wr - wl;
      const double na = (xa + model.b(xa) * h) + model.s(xa) * dw;
      const double nb = (xb + model.b(xb) * h) + model.s(xb) * dw;
      const bool bad_a = !std::isfinite(na), bad_b = !std::isfinite(nb);
      if (bad_a || bad_b) {
        if (bad_a) {
          a.invalid = true;
          a.invalid_index = k + 1;
        }
        if (bad_b) {
          b.invalid = true;
          b.invalid_index = k + 1;
        }
        frozen = true;
      } else {
        xa = na;
        xb = nb;
        if (std::fabs(xa) > n_trunc || std::fabs(xb) > n_trunc) {
          a.exit_index = b.exit_index = k + 1;
          frozen = true;
        }
      }
    }
    a.values[static_cast<std::size_t>(k + 1)] = xa;
    b.values[static_cast<std::size_t>(k + 1)] = xb;
    wl = wr;
  }
  return {std::move(a), std::move(b)};
}

std::vector<StrongErrorRow> strong_error_study(
    const coefficients::Model& model, double x0, double T, int n_min,
    int n_max, int n_ref, std::int64_t M, double eps, double n_trunc,
    const rng::Stream& s, int workers) {
  if (!(n_min < n_max && n_max < n_ref && n_ref <= brownian::kMaxLevel))
    throw ConfigError("need n_min < n_max < n_ref <= 30");
  if (n_min < 0) throw ConfigError("n_min must be >= 0");
  if (M < 2) throw ConfigError("strong error study needs M >= 2");
  if (model.d != 1) throw ConfigError("strong error study is 1-D");
  std::int64_t Kc = 0;
  if (!dyadic_steps(T, n_min, &Kc)) throw ConfigError("T not dyadic at n_min");

  const int levels = n_max - n_min + 1;
  std::vector<double> sup2(static_cast<std::size_t>(levels) * M, 0.0);
  std::vector<char> bad(static_cast<std::size_t>(levels) * M, 0);

  parallel_for(workers, M, [&](std::int64_t i) {
    thread_local brownian::DyadicPath path;
    thread_local Trajectory traj;
    thread_local std::vector<double> coarse;  // per level, on the n_min grid
    thread_local std::vector<char> lvl_bad;
    coarse.assign(static_cast<std::size_t>(levels) * (Kc + 1), 0.0);
    lvl_bad.assign(levels, 0);
    brownian::sample_path_into(rng::substream(s, static_cast<std::uint64_t>(i)),
                               T, n_min, 1, path);
    for (int li = 0; li < levels; ++li) {
      const int lev = n_min + li;
      simulate_into(model, path, lev, &x0, eps, n_trunc, traj);
      lvl_bad[li] = traj.invalid ? 1 : 0;
      const std::int64_t stride = std::int64_t{1} << (lev - n_min);
      for (std::int64_t k = 0; k <= Kc; ++k)
        coarse[static_cast<std::size_t>(li) * (Kc + 1) + k] =
            traj.values[static_cast<std::size_t>(k * stride)];
      if (lev < n_max) brownian::refine(path);
    }
    for (int lev = n_max; lev < n_ref; ++lev) brownian::refine(path);
    simulate_into(model, path, n_ref, &x0, eps, n_trunc, traj);
    const bool ref_bad = traj.invalid;
    const std::int64_t rstride = std::int64_t{1} << (n_ref - n_min);
    for (int li = 0; li < levels; ++li) {
      if (ref_bad || lvl_bad[li]) {
        bad[static_cast<std::size_t>(li) * M + i] = 1;
        continue;
      }
      double worst = 0.0;
      for (std::int64_t k = 0; k <= Kc; ++k) {
        const double diff =
            traj.values[static_cast<std::size_t>(k * rstride)] -
            coarse[static_cast<std::size_t>(li) * (Kc + 1) + k];
        const double d2 = diff * diff;
        if (d2 > worst) worst = d2;
      }
      sup2[static_cast<std::size_t>(li) * M + i] = worst;
    }
  });

  std::vector<StrongErrorRow> rows;
  for (int li = 0; li < levels; ++li) {
    StrongErrorRow row;
    row.n = n_min + li;
    row.M = M;
    std::vector<double> vals;
    vals.reserve(M);
    for (std::int64_t i = 0; i < M; ++i) {
      if (bad[static_cast<std::size_t>(li) * M + i])
        ++row.excluded;
      else
        vals.push_back(sup2[static_cast<std::size_t>(li) * M + i]);
    }
    if (vals.empty())
      throw NumericalError("all paths invalid in strong error study");
    const auto ms = mean_stderr(vals);
    row.est = ms.mean;
    row.stderr_ = ms.stderr_;
    rows.push_back(row);
  }
  return rows;
}

TailCheck tail_bound_check(double A, double B, int d, double T, double R,
                           std::int64_t M, const rng::Stream& s, int workers,
                           int level) {
  if (!(A > 0.0) || B < 0.0) throw ConfigError("need A > 0 and B >= 0");
  if (d < 1 || d > 255) throw ConfigError("dimension d must be in [1, 255]");
  const double sd = std::sqrt(static_cast<double>(d));
  if (!(R > sd * B * T))
    throw ConfigError("tail bound needs R > sqrt(d) * B * T");
  std::int64_t K = 0;
  if (!dyadic_steps(T, level, &K)) throw ConfigError("T not dyadic at level");
  if (M < 1) throw ConfigError("M must be >= 1");

  TailCheck res;
  res.M = M;
  const double dev = R - sd * B * T;
  res.bound = 2.0 * d * std::exp(-(dev * dev) / (2.0 * d * A * A * T));

  const double scale = std::sqrt(std::ldexp(1.0, -level));
  const double h = std::ldexp(1.0, -level);
  const double R2 = R * R;
  std::vector<char> hit(static_cast<std::size_t>(M), 0);
  parallel_for(workers, M, [&](std::int64_t i) {
    thread_local std::vector<double> z;
    z.resize(static_cast<std::size_t>(K) * d);
    const rng::Stream si = rng::substream(s, static_cast<std::uint64_t>(i));
    for (int c = 0; c < d; ++c)
      rng::fill_normals(si, brownian::draw_counter(0, level, c, 0), K,
                        z.data() + static_cast<std::size_t>(c) * K);
    if (d == 1) {
      double w = 0.0;
      for (std::int64_t k = 0; k < K; ++k) {
        w += scale * z[static_cast<std::size_t>(k)];
        const double e = A * w + B * (static_cast<double>(k + 1) * h);
        if (e * e >= R2) {
          hit[static_cast<std::size_t>(i)] = 1;
          return;
        }
      }
      return;
    }
    thread_local std::vector<double> w;
    w.assign(d, 0.0);
    for (std::int64_t k = 0; k < K; ++k) {
      const double t = static_cast<double>(k + 1) * h;
      double n2 = 0.0;
      for (int c = 0; c < d; ++c) {
        w[c] += scale * z[static_cast<std::size_t>(c) * K + k];
        const double e = A * w[c] + B * t;
        n2 += e * e;
      }
      if (n2 >= R2) {
        hit[static_cast<std::size_t>(i)] = 1;
        return;
      }
    }
  });
  for (std::int64_t i = 0; i < M; ++i) res.hits += hit[static_cast<std::size_t>(i)];
  res.empirical = static_cast<double>(res.hits) / static_cast<double>(M);
  return res;
}

}  // namespace sde::euler
