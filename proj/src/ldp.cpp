#include "sde/ldp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sde/brownian.hpp"
#include "sde/euler.hpp"
#include "sde/pool.hpp"
#include "sde/util.hpp"

namespace sde::ldp {

namespace {

constexpr double kZ95 = 1.959963984540054;

void validate_common(const coefficients::Model& model,
                     const std::vector<double>& eps_list, std::int64_t M,
                     double T, int level) {
  if (!model.scalar()) throw ConfigError("ldp studies need a 1-D model");
  if (!model.bounded)
    throw ConfigError(
        "ldp studies require bounded coefficients; apply truncate first");
  if (eps_list.empty()) throw ConfigError("epsilon list must be non-empty");
  for (double e : eps_list)
    if (!(e > 0.0)) throw ConfigError("epsilon values must be > 0");
  if (M < 1) throw ConfigError("M must be >= 1");
  std::int64_t steps = 0;
  if (level < 0 || level > brownian::kMaxLevel || !dyadic_steps(T, level, &steps))
    throw ConfigError("T must be a positive integer multiple of 2^-level");
}

LdpRow make_row(double eps, std::int64_t M, std::int64_t hits) {
  LdpRow r;
  r.eps = eps;
  r.M = M;
  r.hits = hits;
  r.phat = static_cast<double>(hits) / static_cast<double>(M);
  const Wilson w = wilson95(hits, M);
  r.lo95 = w.lo;
  r.hi95 = w.hi;
  r.eps_log_phat = hits > 0 ? eps * std::log(r.phat) : eps * std::log(w.hi);
  return r;
}

template <class Hit>
std::vector<LdpRow> run_events(const std::vector<double>& eps_list,
                               std::int64_t M, double T, int level,
                               const rng::Stream& s, int workers,
                               const Hit& hit_fn) {
  std::vector<LdpRow> rows;
  std::vector<char> hit(static_cast<std::size_t>(M));
  for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
    const double eps = eps_list[ei];
    std::fill(hit.begin(), hit.end(), 0);
    parallel_for(workers, M, [&](std::int64_t i) {
      thread_local brownian::DyadicPath path;
      thread_local euler::Trajectory traj;
      const std::uint64_t sid =
          static_cast<std::uint64_t>(ei) * static_cast<std::uint64_t>(M) +
          static_cast<std::uint64_t>(i);
      brownian::sample_path_into(rng::substream(s, sid), T, level, 1, path);
      hit[static_cast<std::size_t>(i)] = hit_fn(path, eps, traj) ? 1 : 0;
    });
    std::int64_t hits = 0;
    for (char c : hit) hits += c;
    rows.push_back(make_row(eps, M, hits));
  }
  return rows;
}

}  // namespace

Wilson wilson95(std::int64_t hits, std::int64_t trials) {
  if (trials < 1) throw ConfigError("wilson95 needs trials >= 1");
  if (hits < 0 || hits > trials)
    throw ConfigError("wilson95 needs 0 <= hits <= trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(hits) / n;
  const double z2 = kZ95 * kZ95;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half =
      kZ95 * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  Wilson w;
  w.lo = std::max(0.0, center - half);
  w.hi = std::min(1.0, center + half);
  return w;
}

std::vector<LdpRow> exit_probability_study(const coefficients::Model& model,
                                           double x0, double R_dom, double T,
                                           int level,
                                           const std::vector<double>& eps_list,
                                           std::int64_t M, double n_trunc,
                                           const rng::Stream& s, int workers) {
  validate_common(model, eps_list, M, T, level);
  if (!(R_dom > 0.0)) throw ConfigError("R_dom must be > 0");
  if (!(std::fabs(x0) < R_dom))
    throw ConfigError("exit study needs |x0| < R_dom");
  if (model.trunc_radius < 2.0 * R_dom)
    throw ConfigError("truncation radius must be >= 2*R_dom");
  return run_events(
      eps_list, M, T, level, s, workers,
      [&](const brownian::DyadicPath& path, double eps,
          euler::Trajectory& traj) {
        euler::simulate_into(model, path, level, &x0, eps, n_trunc, traj);
        if (traj.invalid)
          throw NumericalError("non-finite trajectory under a bounded model");
        for (double v : traj.values)
          if (std::fabs(v - x0) >= R_dom) return true;
        return false;
      });
}

std::vector<LdpRow> tube_probability_study(const coefficients::Model& model,
                                           double x0,
                                           const std::vector<double>& phi,
                                           double delta, double T, int level,
                                           const std::vector<double>& eps_list,
                                           std::int64_t M, double n_trunc,
                                           const rng::Stream& s, int workers) {
  validate_common(model, eps_list, M, T, level);
  if (!(delta > 0.0)) throw ConfigError("tube radius delta must be > 0");
  std::int64_t K = 0;
  dyadic_steps(T, level, &K);
  if (static_cast<std::int64_t>(phi.size()) != K + 1)
    throw ConfigError("phi needs " + std::to_string(K + 1) +
                      " grid values, got " + std::to_string(phi.size()));
  if (phi[0] != x0) throw ConfigError("phi[0] must equal x0");
  return run_events(
      eps_list, M, T, level, s, workers,
      [&](const brownian::DyadicPath& path, double eps,
          euler::Trajectory& traj) {
        euler::simulate_into(model, path, level, &x0, eps, n_trunc, traj);
        if (traj.invalid)
          throw NumericalError("non-finite trajectory under a bounded model");
        for (std::size_t k = 0; k < traj.values.size(); ++k)
          if (std::fabs(traj.values[k] - phi[k]) > delta) return false;
        return true;
      });
}

std::vector<GapRow> euler_gap_probe(const coefficients::Model& model,
                                    double x0, double delta,
                                    const std::vector<double>& eps_list,
                                    const std::vector<int>& n_list, double T,
                                    std::int64_t M, double n_trunc,
                                    const rng::Stream& s, int workers) {
  if (n_list.empty()) throw ConfigError("level list must be non-empty");
  int n_lo = n_list.front(), n_hi = n_list.front();
  for (int n : n_list) {
    n_lo = std::min(n_lo, n);
    n_hi = std::max(n_hi, n);
  }
  if (n_lo < 0 || n_hi + 4 > brownian::kMaxLevel)
    throw ConfigError("levels must sit in [0, 26] (reference adds 4)");
  validate_common(model, eps_list, M, T, n_lo);
  for (double e : eps_list)
    if (e < 0.05)
      throw ConfigError("gap probe is calibrated for epsilon >= 0.05");
  if (!(delta > 0.0)) throw ConfigError("delta must be > 0");

  const std::size_t NL = n_list.size();
  std::vector<GapRow> rows;
  std::vector<char> hit(static_cast<std::size_t>(M) * NL);
  for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
    const double eps = eps_list[ei];
    std::fill(hit.begin(), hit.end(), 0);
    parallel_for(workers, M, [&](std::int64_t i) {
      thread_local brownian::DyadicPath path;
      thread_local euler::Trajectory coarse, fine;
      const std::uint64_t sid =
          static_cast<std::uint64_t>(ei) * static_cast<std::uint64_t>(M) +
          static_cast<std::uint64_t>(i);
      // one path per replication: sample at the coarsest level, refine to
      // the finest reference; every row reads its two levels by stride
      brownian::sample_path_into(rng::substream(s, sid), T, n_lo, 1, path);
      while (path.level < n_hi + 4) brownian::refine(path);
      for (std::size_t ni = 0; ni < NL; ++ni) {
        const int n = n_list[ni];
        euler::simulate_into(model, path, n, &x0, eps, n_trunc, coarse);
        euler::simulate_into(model, path, n + 4, &x0, eps, n_trunc, fine);
        if (coarse.invalid || fine.invalid)
          throw NumericalError("non-finite trajectory under a bounded model");
        bool h = false;
        for (std::size_t j = 0; j < fine.values.size() && !h; ++j)
          if (std::fabs(fine.values[j] - coarse.values[j >> 4]) >= delta)
            h = true;
        hit[static_cast<std::size_t>(i) * NL + ni] = h ? 1 : 0;
      }
    });
    for (std::size_t ni = 0; ni < NL; ++ni) {
      std::int64_t hits = 0;
      for (std::int64_t i = 0; i < M; ++i)
        hits += hit[static_cast<std::size_t>(i) * NL + ni];
      GapRow r;
      r.eps = eps;
      r.n = n_list[ni];
      r.n_ref = n_list[ni] + 4;
      r.M = M;
      r.hits = hits;
      r.phat = static_cast<double>(hits) / static_cast<double>(M);
      const Wilson w = wilson95(hits, M);
      r.lo95 = w.lo;
      r.hi95 = w.hi;
      rows.push_back(r);
    }
  }
  return rows;
}

SlopeFit fit_rate(const std::vector<LdpRow>& rows) {
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (const auto& r : rows) {
    if (r.hits <= 0) continue;  // zero-hit rows carry bounds only
    const double x = 1.0 / r.eps;
    const double y = std::log(r.phat);
    // binomial delta method; continuity-correct the variance at phat = 1
    const double n = static_cast<double>(r.M);
    const double pv = std::min(r.phat, (n - 0.5) / n);
    const double var = (1.0 - pv) / (n * pv);
    const double w = 1.0 / var;
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
    ++used;
  }
  if (used < 2)
    throw NumericalError("rate fit needs at least two rows with hits");
  const double den = sw * sxx - sx * sx;
  if (!(den > 0.0)) throw NumericalError("degenerate design in rate fit");
  SlopeFit f;
  const double slope = (sw * sxy - sx * sy) / den;
  f.I_hat = -slope;
  f.stderr_ = std::sqrt(sw / den);
  f.rows = used;
  return f;
}

}  // namespace sde::ldp
