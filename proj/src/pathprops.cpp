#include "sde/pathprops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sde/accum.hpp"
#include "sde/pool.hpp"
#include "sde/util.hpp"

namespace sde::pathprops {

namespace {

void require_scalar(const coefficients::Model& m, const char* what) {
  if (!m.scalar()) throw ConfigError(std::string(what) + " needs a 1-D model");
}

}  // namespace

std::vector<ContinuityRow> continuity_study(
    const coefficients::Model& model, double x0,
    const std::vector<double>& deltas, double T, int n, std::int64_t M,
    double eps, double n_trunc, const rng::Stream& s, int workers) {
  require_scalar(model, "continuity study");
  if (deltas.empty()) throw ConfigError("deltas must be non-empty");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (deltas[i] < 0.0) throw ConfigError("deltas must be nonnegative");
    if (i > 0 && deltas[i] >= deltas[i - 1])
      throw ConfigError("deltas must be strictly decreasing");
  }
  if (M < 1) throw ConfigError("M must be >= 1");
  const std::size_t D = deltas.size();
  std::vector<double> sup2(D * M, 0.0);
  std::vector<char> bad(D * M, 0);
  parallel_for(workers, M, [&](std::int64_t i) {
    thread_local brownian::DyadicPath path;
    brownian::sample_path_into(rng::substream(s, static_cast<std::uint64_t>(i)),
                               T, n, 1, path);
    for (std::size_t di = 0; di < D; ++di) {
      const auto [a, b] =
          euler::simulate_pair(model, path, x0, x0 + deltas[di], eps, n_trunc);
      if (a.invalid || b.invalid) {
        bad[di * M + i] = 1;
        continue;
      }
      double worst = 0.0;
      for (std::size_t k = 0; k < a.values.size(); ++k) {
        const double d = a.values[k] - b.values[k];
        worst = std::max(worst, d * d);
      }
      sup2[di * M + i] = worst;
    }
  });
  std::vector<ContinuityRow> rows;
  for (std::size_t di = 0; di < D; ++di) {
    ContinuityRow r;
    r.delta = deltas[di];
    std::vector<double> vals;
    vals.reserve(M);
    for (std::int64_t i = 0; i < M; ++i) {
      if (bad[di * M + i])
        ++r.excluded;
      else
        vals.push_back(sup2[di * M + i]);
    }
    if (vals.empty()) throw NumericalError("all paths invalid in continuity study");
    const auto ms = mean_stderr(vals);
    r.est = ms.mean;
    r.stderr_ = ms.stderr_;
    rows.push_back(r);
  }
  return rows;
}

GapStatistics confluence_study(const coefficients::Model& model, double x,
                               double y, double T, int n, std::int64_t M,
                               double tau, double eps, double n_trunc,
                               const rng::Stream& s, int workers) {
  require_scalar(model, "confluence study");
  if (x == y) throw ConfigError("confluence study needs x != y");
  if (!(tau >= 0.0)) throw ConfigError("tau must be >= 0");
  if (M < 1) throw ConfigError("M must be >= 1");
  GapStatistics g;
  g.M = M;
  g.tau = tau;
  g.min_gap.assign(M, 0.0);
  g.max_gap.assign(M, 0.0);
  std::vector<std::int64_t> flips(M, 0);
  std::vector<char> bad(M, 0);
  parallel_for(workers, M, [&](std::int64_t i) {
    thread_local brownian::DyadicPath path;
    brownian::sample_path_into(rng::substream(s, static_cast<std::uint64_t>(i)),
                               T, n, 1, path);
    const auto [a, b] = euler::simulate_pair(model, path, x, y, eps, n_trunc);
    if (a.invalid || b.invalid) {
      bad[i] = 1;
      return;
    }
    double mn = 1e300, mx = 0.0;
    std::int64_t fl = 0;
    double prev = a.values[0] - b.values[0];
    for (std::size_t k = 0; k < a.values.size(); ++k) {
      const double d = a.values[k] - b.values[k];
      const double ad = std::fabs(d);
      mn = std::min(mn, ad);
      mx = std::max(mx, ad);
      if (k > 0 && d != 0.0 && prev != 0.0 && (d < 0.0) != (prev < 0.0)) ++fl;
      if (d != 0.0) prev = d;
    }
    g.min_gap[i] = mn;
    g.max_gap[i] = mx;
    flips[i] = fl;
  });
  std::int64_t below = 0, valid = 0;
  double gmin = 1e300;
  for (std::int64_t i = 0; i < M; ++i) {
    if (bad[i]) {
      ++g.excluded;
      continue;
    }
    ++valid;
    g.sign_flips += flips[i];
    if (g.min_gap[i] < tau) ++below;
    gmin = std::min(gmin, g.min_gap[i]);
  }
  if (valid == 0) throw NumericalError("all paths invalid in confluence study");
  g.fraction_below_tau = static_cast<double>(below) / static_cast<double>(valid);
  g.global_min_gap = gmin;
  return g;
}

ComparisonResult comparison_study(const coefficients::Model& m1,
                                  const coefficients::Model& m2, double x1_0,
                                  double x2_0, double T, int n, std::int64_t M,
                                  double eps, double n_trunc,
                                  const rng::Stream& s, int workers) {
  require_scalar(m1, "comparison study");
  require_scalar(m2, "comparison study");
  if (!(x1_0 <= x2_0)) throw ConfigError("comparison needs x1_0 <= x2_0");
  if (M < 1) throw ConfigError("M must be >= 1");
  // spot-check the hypotheses: ordered drifts, shared diffusion
  for (int i = 0; i <= 400; ++i) {
    const double x = -10.0 + 20.0 * i / 400.0;
    if (m1.b(x) > m2.b(x))
      throw ConfigError("drift order b1 <= b2 fails at spot-check point");
    if (m1.s(x) != m2.s(x))
      throw ConfigError("comparison requires a shared diffusion coefficient");
  }
  std::int64_t K = 0;
  if (!dyadic_steps(T, n, &K)) throw ConfigError("T not dyadic at level n");

  ComparisonResult res;
  res.M = M;
  std::vector<std::int64_t> viol(M, 0), seen(M, 0);
  std::vector<char> bad(M, 0);
  parallel_for(workers, M, [&](std::int64_t i) {
    thread_local brownian::DyadicPath path;
    brownian::sample_path_into(rng::substream(s, static_cast<std::uint64_t>(i)),
                               T, n, 1, path);
    // same recursion as simulate_pair but with the two drifts
    const double h = std::ldexp(1.0, -n);
    const double sq = std::sqrt(eps);
    double xa = x1_0, xb = x2_0;
    std::int64_t v = 0, c = 0;
    const double* pv = path.values.data();
    double wl = sq * pv[0];
    for (std::int64_t k = 0; k < K; ++k) {
      const double wr = sq * pv[k + 1];
      const double dw = wr - wl;
      const double na = (xa + m1.b(xa) * h) + m1.s(xa) * dw;
      const double nb = (xb + m2.b(xb) * h) + m2.s(xb) * dw;
      if (!std::isfinite(na) || !std::isfinite(nb)) {
        bad[i] = 1;
        return;
      }
      xa = na;
      xb = nb;
      if (std::fabs(xa) > n_trunc || std::fabs(xb) > n_trunc) break;
      ++c;
      if (xa > xb) ++v;
      wl = wr;
    }
    viol[i] = v;
    seen[i] = c;
  });
  for (std::int64_t i = 0; i < M; ++i) {
    if (bad[i]) {
      ++res.excluded;
      continue;
    }
    res.checked += seen[i];
    res.violations += viol[i];
  }
  if (res.checked == 0)
    throw NumericalError("all paths invalid in comparison study");
  res.violation_fraction =
      static_cast<double>(res.violations) / static_cast<double>(res.checked);
  return res;
}

FlowSnapshot flow_snapshot(const coefficients::Model& model,
                           const std::vector<double>& grid, double t, int n,
                           std::int64_t M, double eps, double n_trunc,
                           const rng::Stream& s, int workers) {
  require_scalar(model, "flow snapshot");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw ConfigError("flow grid must be sorted ascending");
  FlowSnapshot snap;
  snap.t = t;
  snap.grid = grid;
  const std::size_t J = grid.size();
  if (J == 0 || M == 0) return snap;  // empty aggregate
  std::vector<double> terminal(static_cast<std::size_t>(M) * J, 0.0);
  std::vector<std::int64_t> viol(M, 0);
  std::vector<char> bad(M, 0);
  parallel_for(workers, M, [&](std::int64_t i) {
    thread_local brownian::DyadicPath path;
    thread_local euler::Trajectory traj;
    brownian::sample_path_into(rng::substream(s, static_cast<std::uint64_t>(i)),
                               t, n, 1, path);
    for (std::size_t j = 0; j < J; ++j) {
      const double x0 = grid[j];
      euler::simulate_into(model, path, n, &x0, eps, n_trunc, traj);
      if (traj.invalid) {
        bad[i] = 1;
        return;
      }
      terminal[static_cast<std::size_t>(i) * J + j] = traj.values.back();
    }
    std::int64_t v = 0;
    for (std::size_t j = 0; j + 1 < J; ++j)
      if (terminal[static_cast<std::size_t>(i) * J + j] >
          terminal[static_cast<std::size_t>(i) * J + j + 1])
        ++v;
    viol[i] = v;
  });
  snap.mean_terminal.assign(J, 0.0);
  snap.min_terminal.assign(J, 1e300);
  snap.max_terminal.assign(J, -1e300);
  std::int64_t valid = 0;
  std::vector<double> col;
  col.reserve(M);
  for (std::size_t j = 0; j < J; ++j) {
    col.clear();
    for (std::int64_t i = 0; i < M; ++i) {
      if (bad[i]) continue;
      const double v = terminal[static_cast<std::size_t>(i) * J + j];
      col.push_back(v);
      snap.min_terminal[j] = std::min(snap.min_terminal[j], v);
      snap.max_terminal[j] = std::max(snap.max_terminal[j], v);
    }
    if (!col.empty()) snap.mean_terminal[j] = pairwise_sum(col) / col.size();
  }
  for (std::int64_t i = 0; i < M; ++i) {
    if (bad[i]) {
      ++snap.excluded;
      continue;
    }
    ++valid;
    snap.violations += viol[i];
  }
  snap.adjacent_pairs = valid * static_cast<std::int64_t>(J > 0 ? J - 1 : 0);
  snap.violation_fraction =
      snap.adjacent_pairs > 0
          ? static_cast<double>(snap.violations) / snap.adjacent_pairs
          : 0.0;
  return snap;
}

MomentReport moment_modulus_study(const coefficients::Model& model,
                                  const std::vector<MomentPair>& pairs,
                                  double p, int n, std::int64_t M, double eps,
                                  double n_trunc, const rng::Stream& s,
                                  int workers) {
  require_scalar(model, "moment modulus study");
  if (!model.bounded)
    throw ConfigError(
        "moment modulus study requires a bounded model; apply truncate first");
  if (!(p >= 1.0)) throw ConfigError("moment order p must be >= 1");
  if (pairs.empty()) throw ConfigError("pairs must be non-empty");
  if (M < 1) throw ConfigError("M must be >= 1");
  double horizon = 0.0;
  for (const auto& pr : pairs) horizon = std::max({horizon, pr.s, pr.t});
  if (!(horizon > 0.0)) throw ConfigError("observation times must be positive");

  const std::size_t P = pairs.size();
  std::vector<double> mom(P * M, 0.0);
  std::vector<char> bad(P * M, 0);
  std::int64_t K = 0;
  if (!dyadic_steps(horizon, n, &K)) throw ConfigError("times not dyadic at n");
  parallel_for(workers, M, [&](std::int64_t i) {
    thread_local brownian::DyadicPath path;
    brownian::sample_path_into(rng::substream(s, static_cast<std::uint64_t>(i)),
                               horizon, n, 1, path);
    for (std::size_t pi = 0; pi < P; ++pi) {
      const auto& pr = pairs[pi];
      std::int64_t ks = 0, kt = 0;
      if (!dyadic_steps(pr.s == 0.0 ? horizon : pr.s, n, &ks) ||
          !dyadic_steps(pr.t == 0.0 ? horizon : pr.t, n, &kt))
        throw ConfigError("pair times must be dyadic at level n");
      if (pr.s == 0.0) ks = 0;
      if (pr.t == 0.0) kt = 0;
      const auto [a, b] =
          euler::simulate_pair(model, path, pr.x, pr.y, eps, n_trunc);
      if (a.invalid || b.invalid) {
        bad[pi * M + i] = 1;
        continue;
      }
      const double diff = a.values[static_cast<std::size_t>(ks)] -
                          b.values[static_cast<std::size_t>(kt)];
      mom[pi * M + i] = std::pow(std::fabs(diff), 2.0 * p);
    }
  });
  MomentReport rep;
  for (std::size_t pi = 0; pi < P; ++pi) {
    MomentRow row;
    row.pair = pairs[pi];
    std::vector<double> vals;
    vals.reserve(M);
    for (std::int64_t i = 0; i < M; ++i) {
      if (bad[pi * M + i])
        ++row.excluded;
      else
        vals.push_back(mom[pi * M + i]);
    }
    if (vals.empty()) throw NumericalError("all paths invalid in moment study");
    const auto ms = mean_stderr(vals);
    row.moment = ms.mean;
    row.stderr_ = ms.stderr_;
    const double dx = std::fabs(pairs[pi].x - pairs[pi].y);
    const double dt = std::fabs(pairs[pi].t - pairs[pi].s);
    row.envelope = std::pow(dt, p) + std::pow(dx, 2.0 * p) +
                   std::pow(dx, 0.5 * p) + std::pow(dx, 2.5 * p);
    if (row.envelope > 0.0) {
      row.ratio = row.moment / row.envelope;
      rep.c_fit = std::max(rep.c_fit, row.ratio);
      rep.c_fit_hi95 = std::max(
          rep.c_fit_hi95, (row.moment + 1.96 * row.stderr_) / row.envelope);
    }
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace sde::pathprops
