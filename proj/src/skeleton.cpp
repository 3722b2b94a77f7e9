#include "sde/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "sde/accum.hpp"
#include "sde/brownian.hpp"
#include "sde/util.hpp"

namespace sde::skeleton {

namespace {

void require_scalar(const coefficients::Model& m) {
  if (!m.scalar()) throw ConfigError("skeleton module needs a 1-D model");
}

void validate_control(const Control& c) {
  if (c.level < 0 || c.level > brownian::kMaxLevel)
    throw ConfigError("control level out of range [0, 30]");
  std::int64_t cells = 0;
  if (!dyadic_steps(c.T, c.level, &cells))
    throw ConfigError(
        "control horizon T must be a positive integer multiple of 2^-level");
  if (cells != c.cells())
    throw ConfigError("control has " + std::to_string(c.cells()) +
                      " cells, grid needs " + std::to_string(cells));
}

}  // namespace

double energy(const Control& c) {
  std::vector<double> sq(c.hdot.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = c.hdot[i] * c.hdot[i];
  return std::ldexp(pairwise_sum(sq), -c.level);
}

OdeTrajectory solve_skeleton(const coefficients::Model& model, double x0,
                             const Control& c, OdeMethod method,
                             int level_out) {
  require_scalar(model);
  validate_control(c);
  if (level_out < c.level)
    throw ConfigError("level_out must be >= the control level");
  if (level_out > brownian::kMaxLevel)
    throw ConfigError("level_out out of range [control level, 30]");
  std::int64_t K = 0;
  if (!dyadic_steps(c.T, level_out, &K))
    throw ConfigError("horizon not dyadic at level_out");

  const int shift = level_out - c.level;
  const double h = std::ldexp(1.0, -level_out);
  OdeTrajectory tr;
  tr.level = level_out;
  tr.T = c.T;
  tr.values.assign(static_cast<std::size_t>(K) + 1, x0);
  double x = x0;
  for (std::int64_t j = 0; j < K; ++j) {
    const double u = c.hdot[static_cast<std::size_t>(j >> shift)];
    double xn;
    if (method == OdeMethod::euler) {
      xn = x + (model.s(x) * u + model.b(x)) * h;
    } else {
      const double k1 = model.s(x) * u + model.b(x);
      const double x2 = x + 0.5 * h * k1;
      const double k2 = model.s(x2) * u + model.b(x2);
      const double x3 = x + 0.5 * h * k2;
      const double k3 = model.s(x3) * u + model.b(x3);
      const double x4 = x + h * k3;
      const double k4 = model.s(x4) * u + model.b(x4);
      xn = x + h * ((k1 + 2.0 * (k2 + k3) + k4) / 6.0);
    }
    if (!std::isfinite(xn)) {
      tr.invalid = true;
      tr.invalid_index = j + 1;
      for (std::int64_t r = j + 1; r <= K; ++r)
        tr.values[static_cast<std::size_t>(r)] = x;
      break;
    }
    x = xn;
    tr.values[static_cast<std::size_t>(j) + 1] = x;
  }
  return tr;
}

ConsistencyReport skeleton_consistency(const coefficients::Model& model,
                                       double x0, const Control& c,
                                       const std::vector<int>& n_grid) {
  if (n_grid.empty()) throw ConfigError("n_grid must be non-empty");
  ConsistencyReport rep;
  for (int n : n_grid) {
    if (n < c.level)
      throw ConfigError("consistency level below the control level");
    if (n + 4 > brownian::kMaxLevel)
      throw ConfigError("consistency level exceeds 26 (reference adds 4)");
    const auto eul = solve_skeleton(model, x0, c, OdeMethod::euler, n);
    const auto ref = solve_skeleton(model, x0, c, OdeMethod::rk4, n + 4);
    if (eul.invalid || ref.invalid)
      throw NumericalError("skeleton solution left the finite range");
    double gap = 0.0;
    for (std::size_t k = 0; k < eul.values.size(); ++k)
      gap = std::max(gap, std::fabs(eul.values[k] - ref.values[16 * k]));
    rep.rows.push_back({n, gap});
  }
  // least-squares slope of log2 gap vs n over rows with a positive gap
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (const auto& r : rep.rows) {
    if (!(r.gap > 0.0)) continue;
    const double lx = r.n, ly = std::log2(r.gap);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++cnt;
  }
  const double den = cnt * sxx - sx * sx;
  rep.slope = (cnt >= 2 && den != 0.0) ? (cnt * sxy - sx * sy) / den : 0.0;
  return rep;
}

namespace {

// Penalized objective P_w(u) = 0.5 * h * sum u_k^2 + w * pen(x path), with
// the exact adjoint of the discrete forward recursion.
struct PenaltyProblem {
  const coefficients::Model* model = nullptr;
  double x0 = 0.0;
  double h = 0.0;
  std::int64_t K = 0;
  bool tube = false;
  double y = 0.0;                         // endpoint target
  const std::vector<double>* phi = nullptr;  // tube center, K+1 points
  double delta = 0.0;
  double w = 1.0;
  mutable std::vector<double> x;  // forward scratch, K+1

  void forward(const std::vector<double>& u) const {
    x.resize(static_cast<std::size_t>(K) + 1);
    x[0] = x0;
    for (std::int64_t k = 0; k < K; ++k) {
      const double xk = x[static_cast<std::size_t>(k)];
      x[static_cast<std::size_t>(k) + 1] =
          xk + (model->s(xk) * u[static_cast<std::size_t>(k)] +
                model->b(xk)) *
                   h;
    }
  }

  // d pen / d x_k (unweighted)
  double pen_dx(std::int64_t k) const {
    if (!tube) return k == K ? 2.0 * (x[static_cast<std::size_t>(K)] - y) : 0.0;
    if (k == 0) return 0.0;
    const double d = x[static_cast<std::size_t>(k)] -
                     (*phi)[static_cast<std::size_t>(k)];
    const double e = std::fabs(d) - delta;
    if (e <= 0.0) return 0.0;
    return 2.0 * e * (d < 0.0 ? -1.0 : 1.0);
  }

  double penalty() const {
    if (!tube) {
      const double d = x[static_cast<std::size_t>(K)] - y;
      return d * d;
    }
    double p = 0.0;
    for (std::int64_t k = 1; k <= K; ++k) {
      const double d = x[static_cast<std::size_t>(k)] -
                       (*phi)[static_cast<std::size_t>(k)];
      const double e = std::fabs(d) - delta;
      if (e > 0.0) p += e * e;
    }
    return p;
  }

  double residual() const {
    if (!tube) return std::fabs(x[static_cast<std::size_t>(K)] - y);
    double r = 0.0;
    for (std::int64_t k = 1; k <= K; ++k) {
      const double d = x[static_cast<std::size_t>(k)] -
                       (*phi)[static_cast<std::size_t>(k)];
      r = std::max(r, std::fabs(d) - delta);
    }
    return std::max(r, 0.0);
  }

  double eval(const std::vector<double>& u, std::vector<double>& grad) const {
    grad.assign(u.size(), 0.0);
    forward(u);
    double e2 = 0.0;
    for (std::int64_t k = 0; k < K; ++k) {
      const double uk = u[static_cast<std::size_t>(k)];
      e2 += uk * uk;
    }
    const double xK = x[static_cast<std::size_t>(K)];
    if (!std::isfinite(xK) || !std::isfinite(e2)) return 1e300;
    const double f = 0.5 * h * e2 + w * penalty();
    double lam = w * pen_dx(K);
    for (std::int64_t k = K - 1; k >= 0; --k) {
      const double xk = x[static_cast<std::size_t>(k)];
      const double uk = u[static_cast<std::size_t>(k)];
      grad[static_cast<std::size_t>(k)] = h * uk + lam * model->s(xk) * h;
      if (k > 0)
        lam = lam * (1.0 + (model->db(xk) + model->ds(xk) * uk) * h) +
              w * pen_dx(k);
    }
    return f;
  }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double t : v) m = std::max(m, std::fabs(t));
  return m;
}

// minimizer of the cubic through (a, fa, da), (b, fb, db); NaN if degenerate
double cubic_min(double a, double fa, double da, double b, double fb,
                 double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = (b > a ? 1.0 : -1.0) * std::sqrt(disc);
  return b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
}

using Phi = std::function<double(double, double*)>;  // f(a), writes f'(a)

constexpr double kC1 = 1e-4;
constexpr double kC2 = 0.9;

double zoom(const Phi& phi, double phi0, double dphi0, double alo, double flo,
            double dlo, double ahi, double fhi, double dhi) {
  for (int it = 0; it < 50; ++it) {
    double aj = cubic_min(alo, flo, dlo, ahi, fhi, dhi);
    const double lo = std::min(alo, ahi), hi = std::max(alo, ahi);
    const double margin = 0.1 * (hi - lo);
    if (!std::isfinite(aj) || aj < lo + margin || aj > hi - margin)
      aj = 0.5 * (lo + hi);
    double dj = 0.0;
    const double fj = phi(aj, &dj);
    if (fj > phi0 + kC1 * aj * dphi0 || fj >= flo) {
      ahi = aj;
      fhi = fj;
      dhi = dj;
    } else {
      if (std::fabs(dj) <= -kC2 * dphi0) return aj;
      if (dj * (ahi - alo) >= 0.0) {
        ahi = alo;
        fhi = flo;
        dhi = dlo;
      }
      alo = aj;
      flo = fj;
      dlo = dj;
    }
    if (std::fabs(ahi - alo) < 1e-14 * std::max(1.0, std::fabs(alo))) break;
  }
  return flo < phi0 + kC1 * alo * dphi0 ? alo : 0.0;
}

// strong-Wolfe line search; returns the accepted step (0 on failure)
double wolfe_search(const Phi& phi, double phi0, double dphi0, double ainit) {
  if (!(dphi0 < 0.0)) return 0.0;
  double aprev = 0.0, fprev = phi0, dprev = dphi0;
  double a = ainit;
  for (int it = 0; it < 30; ++it) {
    double da = 0.0;
    const double fa = phi(a, &da);
    if (fa > phi0 + kC1 * a * dphi0 || (it > 0 && fa >= fprev))
      return zoom(phi, phi0, dphi0, aprev, fprev, dprev, a, fa, da);
    if (std::fabs(da) <= -kC2 * dphi0) return a;
    if (da >= 0.0) return zoom(phi, phi0, dphi0, a, fa, da, aprev, fprev, dprev);
    aprev = a;
    fprev = fa;
    dprev = da;
    a = std::min(2.0 * a, 1e8);
  }
  return 0.0;
}

struct LbfgsResult {
  double f = 0.0;
  int iters = 0;
  bool hit_gtol = false;
};

LbfgsResult lbfgs_minimize(const PenaltyProblem& prob, std::vector<double>& u,
                           int max_iter, double gtol, int mem) {
  const std::size_t n = u.size();
  std::vector<std::vector<double>> S, Y;
  std::vector<double> rho;
  std::vector<double> g(n), q(n), d(n), u_try(n), g_try(n);
  double f = prob.eval(u, g);
  LbfgsResult res;
  for (int it = 0; it < max_iter; ++it) {
    if (inf_norm(g) <= gtol) {
      res.hit_gtol = true;
      break;
    }
    // two-loop recursion for d = -H g
    q = g;
    const std::size_t hist = S.size();
    std::vector<double> alpha(hist, 0.0);
    for (std::size_t i = hist; i-- > 0;) {
      alpha[i] = rho[i] * dot(S[i], q);
      for (std::size_t j = 0; j < n; ++j) q[j] -= alpha[i] * Y[i][j];
    }
    if (hist > 0) {
      const double gamma =
          dot(S[hist - 1], Y[hist - 1]) / dot(Y[hist - 1], Y[hist - 1]);
      for (double& t : q) t *= gamma;
    }
    for (std::size_t i = 0; i < hist; ++i) {
      const double beta = rho[i] * dot(Y[i], q);
      for (std::size_t j = 0; j < n; ++j) q[j] += (alpha[i] - beta) * S[i][j];
    }
    for (std::size_t j = 0; j < n; ++j) d[j] = -q[j];
    double dphi0 = dot(d, g);
    if (!(dphi0 < 0.0)) {  // not a descent direction; fall back to steepest
      for (std::size_t j = 0; j < n; ++j) d[j] = -g[j];
      dphi0 = dot(d, g);
      if (!(dphi0 < 0.0)) break;
    }
    double last_a = -1.0, last_f = 0.0;
    const Phi phi = [&](double a, double* deriv) {
      for (std::size_t j = 0; j < n; ++j) u_try[j] = u[j] + a * d[j];
      const double fv = prob.eval(u_try, g_try);
      *deriv = dot(d, g_try);
      last_a = a;
      last_f = fv;
      return fv;
    };
    const double ainit =
        it == 0 ? std::min(1.0, 1.0 / std::max(1e-12, inf_norm(g))) : 1.0;
    const double a = wolfe_search(phi, f, dphi0, ainit);
    if (a <= 0.0) break;
    if (a != last_a) {
      double tmp;
      phi(a, &tmp);
    }
    // curvature update
    std::vector<double> s_vec(n), y_vec(n);
    for (std::size_t j = 0; j < n; ++j) {
      s_vec[j] = u_try[j] - u[j];
      y_vec[j] = g_try[j] - g[j];
    }
    const double sy = dot(s_vec, y_vec);
    if (sy > 1e-12 * std::sqrt(dot(s_vec, s_vec)) *
                 std::sqrt(dot(y_vec, y_vec))) {
      S.push_back(std::move(s_vec));
      Y.push_back(std::move(y_vec));
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > mem) {
        S.erase(S.begin());
        Y.erase(Y.begin());
        rho.erase(rho.begin());
      }
    }
    u.swap(u_try);
    g.swap(g_try);
    f = last_f;
    res.iters = it + 1;
  }
  res.f = f;
  return res;
}

double run_grad_check(const PenaltyProblem& prob, const std::vector<double>& u,
                      const rng::Stream& stream) {
  std::vector<double> g(u.size()), scratch(u.size());
  prob.eval(u, g);
  const std::int64_t K = static_cast<std::int64_t>(u.size());
  const double step = 1e-6;
  double worst = 0.0;
  std::vector<double> up = u;
  for (int i = 0; i < 20; ++i) {
    const std::int64_t j = std::min<std::int64_t>(
        K - 1, static_cast<std::int64_t>(
                   rng::uniform01(stream, static_cast<std::uint64_t>(i)) * K));
    const double saved = up[static_cast<std::size_t>(j)];
    up[static_cast<std::size_t>(j)] = saved + step;
    const double fp = prob.eval(up, scratch);
    up[static_cast<std::size_t>(j)] = saved - step;
    const double fm = prob.eval(up, scratch);
    up[static_cast<std::size_t>(j)] = saved;
    const double fd = (fp - fm) / (2.0 * step);
    const double an = g[static_cast<std::size_t>(j)];
    const double denom = std::max(std::fabs(fd), std::fabs(an));
    const double err = denom < 1e-8 ? std::fabs(fd - an) : std::fabs(fd - an) / denom;
    worst = std::max(worst, err);
  }
  if (!(worst < 1e-5))
    throw NumericalError("gradient check failed: worst relative error " +
                         fmt_g17(worst));
  return worst;
}

RateEstimate drive_penalty(const coefficients::Model& model, double x0,
                           double T, int level, const MinimizeOptions& opts,
                           PenaltyProblem prob,
                           const std::vector<double>& u_init) {
  if (level < 0 || level > 16)
    throw ConfigError("optimizer level out of range [0, 16]");
  if (!(opts.tol > 0.0) || !(opts.w0 > 0.0) || !(opts.w_factor > 1.0) ||
      opts.max_outer < 1 || opts.max_inner < 1 || !(opts.gtol > 0.0) ||
      opts.lbfgs_memory < 1)
    throw ConfigError("invalid optimizer options");
  std::vector<double> u = u_init;

  prob.w = opts.w0;
  RateEstimate est;
  est.grad_check_err = run_grad_check(prob, u, opts.check_stream);

  double w = opts.w0;
  for (int round = 1; round <= opts.max_outer; ++round) {
    prob.w = w;
    const auto r = lbfgs_minimize(prob, u, opts.max_inner, opts.gtol,
                                  opts.lbfgs_memory);
    est.inner_iters += r.iters;
    prob.forward(u);
    Control c{level, T, u};
    TraceRow row{round, w, energy(c), prob.residual(), r.iters};
    est.trace.push_back(row);
    est.outer_rounds = round;
    if (row.residual <= opts.tol) {
      est.converged = true;
      break;
    }
    w *= opts.w_factor;
  }
  if (est.converged) {
    // polish at the final weight so the iterate is stationary well below
    // gtol; the scaling family c -> P_w(c u) then has a flat derivative
    const auto r = lbfgs_minimize(prob, u, opts.max_inner,
                                  std::min(opts.gtol, 1e-12),
                                  opts.lbfgs_memory);
    est.inner_iters += r.iters;
    est.trace.back().inner_iters += r.iters;
    prob.forward(u);
    est.trace.back().residual = prob.residual();
    est.trace.back().energy = energy(Control{level, T, u});
    est.converged = est.trace.back().residual <= opts.tol;
  }
  prob.forward(u);
  est.control = Control{level, T, u};
  est.value = 0.5 * energy(est.control);
  est.residual = prob.residual();
  est.xpath = prob.x;
  std::vector<double> g(u.size());
  prob.eval(u, g);
  est.dir_deriv = dot(g, u);
  return est;
}

}  // namespace

RateEstimate minimize_rate_endpoint(const coefficients::Model& model,
                                    double x0, double y, double T, int level,
                                    const MinimizeOptions& opts) {
  require_scalar(model);
  std::int64_t K = 0;
  if (!dyadic_steps(T, level, &K))
    throw ConfigError("T must be a positive integer multiple of 2^-level");
  PenaltyProblem prob;
  prob.model = &model;
  prob.x0 = x0;
  prob.h = std::ldexp(1.0, -level);
  prob.K = K;
  prob.tube = false;
  prob.y = y;
  // straight-line heuristic: s(xbar) hdot = (y - x0)/T - b(xbar)
  std::vector<double> u(static_cast<std::size_t>(K), 0.0);
  const double xbar = 0.5 * (x0 + y);
  const double sb = model.s(xbar);
  if (std::fabs(sb) > 1e-12) {
    const double v = ((y - x0) / T - model.b(xbar)) / sb;
    if (std::isfinite(v)) std::fill(u.begin(), u.end(), v);
  }
  return drive_penalty(model, x0, T, level, opts, prob, u);
}

RateEstimate minimize_rate_tube(const coefficients::Model& model, double x0,
                                const std::vector<double>& phi, double delta,
                                double T, int level,
                                const MinimizeOptions& opts) {
  require_scalar(model);
  if (!(delta > 0.0)) throw ConfigError("tube radius delta must be > 0");
  std::int64_t K = 0;
  if (!dyadic_steps(T, level, &K))
    throw ConfigError("T must be a positive integer multiple of 2^-level");
  if (static_cast<std::int64_t>(phi.size()) != K + 1)
    throw ConfigError("phi needs " + std::to_string(K + 1) +
                      " grid values, got " + std::to_string(phi.size()));
  if (phi[0] != x0) throw ConfigError("phi[0] must equal x0");
  for (double v : phi)
    if (!std::isfinite(v)) throw ConfigError("phi must be finite");
  PenaltyProblem prob;
  prob.model = &model;
  prob.x0 = x0;
  prob.h = std::ldexp(1.0, -level);
  prob.K = K;
  prob.tube = true;
  prob.phi = &phi;
  prob.delta = delta;
  // tracking heuristic: control that reproduces phi under the euler skeleton
  std::vector<double> u(static_cast<std::size_t>(K), 0.0);
  for (std::int64_t k = 0; k < K; ++k) {
    const double pk = phi[static_cast<std::size_t>(k)];
    const double sp = model.s(pk);
    if (std::fabs(sp) > 1e-12) {
      const double v = ((phi[static_cast<std::size_t>(k) + 1] - pk) / prob.h -
                        model.b(pk)) /
                       sp;
      if (std::isfinite(v)) u[static_cast<std::size_t>(k)] = v;
    }
  }
  return drive_penalty(model, x0, T, level, opts, prob, u);
}

}  // namespace sde::skeleton
