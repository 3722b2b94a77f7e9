#include "sde/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sde/util.hpp"

namespace sde::coefficients {

namespace {

std::string fmt_params(const char* head, double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s:%g,%g", head, a, b);
  return buf;
}

double poly_eval(const std::vector<double>& c, double x) {
  double r = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) r = r * x + c[i];
  return r;
}

std::vector<double> poly_deriv(const std::vector<double>& c) {
  std::vector<double> d;
  for (std::size_t i = 1; i < c.size(); ++i)
    d.push_back(static_cast<double>(i) * c[i]);
  if (d.empty()) d.push_back(0.0);
  return d;
}

// C^2 bump: exactly 1 on |x| <= R, exactly 0 on |x| >= R+1.
double smoothstep_bump(double x, double R) {
  const double u = std::clamp(R + 1.0 - std::fabs(x), 0.0, 1.0);
  if (u == 1.0) return 1.0;
  if (u == 0.0) return 0.0;
  return ((6.0 * u - 15.0) * u + 10.0) * u * u * u;
}

double smoothstep_bump_deriv(double x, double R) {
  if (x == 0.0) return 0.0;  // kink of |x|; subgradient convention
  const double u = R + 1.0 - std::fabs(x);
  if (u <= 0.0 || u >= 1.0) return 0.0;
  const double su = ((30.0 * u - 60.0) * u + 30.0) * u * u;
  return (x > 0.0 ? -su : su);
}

}  // namespace

Model loglog() {
  Model m;
  m.name = "loglog";
  m.b = [](double x) {
    if (x == 0.0 || x == 1.0 || x == -1.0) return 0.0;
    return x * std::log(std::fabs(x));
  };
  m.s = [](double x) {
    if (x == 0.0 || x == 1.0 || x == -1.0) return 0.0;
    return x * std::sqrt(std::fabs(std::log(std::fabs(x))));
  };
  m.db = [](double x) {
    if (x == 0.0) return 0.0;  // derivative blows up; subgradient convention
    return std::log(std::fabs(x)) + 1.0;
  };
  m.ds = [](double x) {
    if (x == 0.0 || x == 1.0 || x == -1.0) return 0.0;  // cusp convention
    const double u = std::fabs(std::log(std::fabs(x)));
    const double r = std::sqrt(u);
    return std::fabs(x) > 1.0 ? r + 0.5 / r : r - 0.5 / r;
  };
  m.fixed_points = {-1.0, 0.0, 1.0};
  return m;
}

Model alphabeta(double alpha, double beta) {
  if (!(beta >= 0.0 && beta <= 0.5 && alpha >= 0.5 && alpha <= 1.0))
    throw ConfigError("alphabeta requires 0 <= beta <= 1/2 <= alpha <= 1");
  Model m;
  m.name = fmt_params("alphabeta", alpha, beta);
  m.b = [alpha, beta](double x) {
    if (x == 0.0) return 0.0;
    const double L = std::fabs(std::log(std::fabs(x)));
    return std::pow(std::fabs(x), alpha) * std::pow(L, 2.0 * beta);
  };
  m.s = [alpha, beta](double x) {
    if (x == 0.0) return 0.0;
    const double L = std::fabs(std::log(std::fabs(x)));
    return std::pow(std::fabs(x), alpha) * std::pow(L, beta);
  };
  auto deriv = [alpha](double x, double p) {
    // d/dx |x|^alpha L^p with L = |log|x||, defined away from 0 and +-1
    if (x == 0.0 || x == 1.0 || x == -1.0) return 0.0;
    const double ax = std::fabs(x);
    const double L = std::fabs(std::log(ax));
    const double sx = x > 0.0 ? 1.0 : -1.0;
    const double slog = std::log(ax) > 0.0 ? 1.0 : -1.0;
    double r = alpha * std::pow(ax, alpha - 1.0) * sx * std::pow(L, p);
    if (p != 0.0)
      r += std::pow(ax, alpha) * p * std::pow(L, p - 1.0) * slog / x;
    return r;
  };
  m.db = [deriv, beta](double x) { return deriv(x, 2.0 * beta); };
  m.ds = [deriv, beta](double x) { return deriv(x, beta); };
  m.fixed_points = beta > 0.0 ? std::vector<double>{-1.0, 0.0, 1.0}
                              : std::vector<double>{0.0};
  return m;
}

Model linear(double a, double sigma) {
  Model m;
  m.name = fmt_params("linear", a, sigma);
  m.b = [a](double x) { return a * x; };
  m.s = [sigma](double) { return sigma; };
  m.db = [a](double) { return a; };
  m.ds = [](double) { return 0.0; };
  if (sigma == 0.0 && a != 0.0) m.fixed_points = {0.0};
  if (a == 0.0) {
    m.bounded = true;
    m.bound = std::fabs(sigma);
    m.trunc_radius = std::numeric_limits<double>::infinity();
  }
  return m;
}

Model custom_poly(std::vector<double> bc, std::vector<double> sc) {
  Model m;
  m.name = "custom";
  if (bc.empty()) bc.push_back(0.0);
  if (sc.empty()) sc.push_back(0.0);
  const auto dbc = poly_deriv(bc);
  const auto dsc = poly_deriv(sc);
  m.b = [bc](double x) { return poly_eval(bc, x); };
  m.s = [sc](double x) { return poly_eval(sc, x); };
  m.db = [dbc](double x) { return poly_eval(dbc, x); };
  m.ds = [dsc](double x) { return poly_eval(dsc, x); };
  if (bc.size() == 1 && sc.size() == 1) {
    m.bounded = true;
    m.bound = std::max(std::fabs(bc[0]), std::fabs(sc[0]));
    m.trunc_radius = std::numeric_limits<double>::infinity();
  }
  return m;
}

Model with_drift_offset(const Model& base, double delta) {
  if (!base.scalar())
    throw ConfigError("drift offset is defined for scalar models only");
  Model m = base;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%+g", delta);
  m.name = base.name + buf;
  const auto b0 = base.b;
  m.b = [b0, delta](double x) { return b0(x) + delta; };
  m.fixed_points.clear();
  if (m.bounded) m.bound = base.bound + std::fabs(delta);
  return m;
}

Model diagonal(const Model& base, int d) {
  if (!base.scalar()) throw ConfigError("diagonal extension needs a scalar base");
  if (d < 1 || d > 255) throw ConfigError("diagonal dimension must be in [1, 255]");
  Model m = base;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "@%d", d);
  m.name = base.name + buf;
  m.d = d;
  m.m = d;
  return m;
}

Model parse(const std::string& spec) {
  auto nums = [&](const char* head) {
    const std::string rest = spec.substr(std::string(head).size());
    std::size_t used = 0;
    const double a = std::stod(rest, &used);
    if (used >= rest.size() || rest[used] != ',')
      throw ConfigError("model spec needs two comma-separated numbers: " + spec);
    std::size_t used2 = 0;
    const double b = std::stod(rest.substr(used + 1), &used2);
    if (used + 1 + used2 != rest.size())
      throw ConfigError("trailing characters in model spec: " + spec);
    return std::pair<double, double>(a, b);
  };
  try {
    if (spec == "loglog") return loglog();
    if (spec.rfind("alphabeta:", 0) == 0) {
      const auto [a, b] = nums("alphabeta:");
      return alphabeta(a, b);
    }
    if (spec.rfind("linear:", 0) == 0) {
      const auto [a, b] = nums("linear:");
      return linear(a, b);
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("malformed number in model spec: " + spec);
  } catch (const std::out_of_range&) {
    throw ConfigError("out-of-range number in model spec: " + spec);
  }
  if (spec == "custom")
    throw ConfigError(
        "model \"custom\" needs b_poly/s_poly coefficient arrays in the config");
  throw ConfigError("unknown model spec: " + spec);
}

double sup_abs_on_ball(const Model& model, double R) {
  if (!(R > 0.0)) throw ConfigError("truncation radius must be positive");
  if (!model.scalar())
    throw ConfigError("sup search is 1-D; supply the bound for d > 1");
  const auto f = [&](double x) {
    return std::max(std::fabs(model.b(x)), std::fabs(model.s(x)));
  };
  const int G = 10000;
  double best = 0.0, bx = 0.0;
  for (int i = 0; i <= G; ++i) {
    const double x = -R + 2.0 * R * static_cast<double>(i) / G;
    const double v = f(x);
    if (v > best) {
      best = v;
      bx = x;
    }
  }
  // golden-section polish around the best cell
  const double cell = 2.0 * R / G;
  double lo = std::max(-R, bx - cell), hi = std::min(R, bx + cell);
  const double gr = 0.6180339887498949;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = f(x1);
    }
  }
  return std::max(best, std::max(f1, f2));
}

Model truncate(const Model& model, const TruncationSpec& spec) {
  if (!model.scalar())
    throw ConfigError("truncation of d > 1 models is not supported; truncate "
                      "the scalar base before extending");
  const double R = spec.radius;
  const double mR = sup_abs_on_ball(model, R);
  Model t = model;
  char buf[96];
  const auto b0 = model.b, s0 = model.s, db0 = model.db, ds0 = model.ds;
  if (spec.mode == TruncMode::clamp) {
    const double cap = mR + 1.0;
    std::snprintf(buf, sizeof(buf), "|clamp:%g", R);
    t.name = model.name + buf;
    t.b = [b0, cap](double x) { return std::clamp(b0(x), -cap, cap); };
    t.s = [s0, cap](double x) { return std::clamp(s0(x), -cap, cap); };
    t.db = [b0, db0, cap](double x) {
      return std::fabs(b0(x)) < cap ? db0(x) : 0.0;
    };
    t.ds = [s0, ds0, cap](double x) {
      return std::fabs(s0(x)) < cap ? ds0(x) : 0.0;
    };
    t.bounded = true;
    t.bound = cap;
  } else {
    std::snprintf(buf, sizeof(buf), "|cutoff:%g", R);
    t.name = model.name + buf;
    t.b = [b0, R](double x) { return b0(x) * smoothstep_bump(x, R); };
    t.s = [s0, R](double x) { return s0(x) * smoothstep_bump(x, R); };
    t.db = [b0, db0, R](double x) {
      return db0(x) * smoothstep_bump(x, R) +
             b0(x) * smoothstep_bump_deriv(x, R);
    };
    t.ds = [s0, ds0, R](double x) {
      return ds0(x) * smoothstep_bump(x, R) +
             s0(x) * smoothstep_bump_deriv(x, R);
    };
    t.bounded = true;
    Model probe = t;
    probe.bounded = false;
    t.bound = sup_abs_on_ball(probe, R + 1.0);
  }
  // clamping preserves exact zeros, and the bump is 1 there
  t.fixed_points = model.fixed_points;
  t.trunc_radius = R;
  return t;
}

std::int64_t EnvelopeReport::drift_violations() const {
  std::int64_t n = 0;
  for (const auto& l : drift) n += l.violations;
  return n;
}

std::int64_t EnvelopeReport::diff_violations() const {
  std::int64_t n = 0;
  for (const auto& l : diff) n += l.violations;
  return n;
}

EnvelopeReport verify_envelope(const Model& model, double C, double mu,
                               const std::vector<double>& N_grid,
                               std::int64_t n_samples, const rng::Stream& s) {
  if (!model.scalar()) throw ConfigError("envelope audit is 1-D");
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  EnvelopeReport rep;
  rep.C = C;
  rep.mu = mu;
  rep.N_grid = N_grid;
  rep.C_est = C;
  rep.mu_est = mu;
  for (std::size_t ni = 0; ni < N_grid.size(); ++ni) {
    const double N = N_grid[ni];
    if (!(N >= 3.0))
      throw ConfigError("every N in N_grid must be > e (i.e. >= 3)");
    const rng::Stream sn = rng::substream(s, ni);
    const double logN = std::log(N);
    const double sqlogN = std::sqrt(logN);
    const double defect = logN / std::pow(N, mu);
    EnvelopeLineReport dl, sl;
    double worst_d = -1e300, worst_s = -1e300;
    for (std::int64_t i = 0; i < n_samples; ++i) {
      const std::uint64_t c0 = static_cast<std::uint64_t>(i) * 4;
      const double u0 = rng::uniform01(sn, c0);
      const double u1 = rng::uniform01(sn, c0 + 1);
      const double u2 = rng::uniform01(sn, c0 + 2);
      const double u3 = rng::uniform01(sn, c0 + 3);
      double x, y;
      switch (i % 8) {
        case 0:  // near the origin: the additive-defect regime
          x = (u1 < 0.5 ? -1.0 : 1.0) * u0 * 1.5 / N;
          y = N * (2.0 * u2 - 1.0);
          break;
        case 1:  // near the unit circle, where the diffusion cusp lives
          x = (u1 < 0.5 ? -1.0 : 1.0) * (1.0 + (u0 - 0.5) * 0.2);
          y = N * (2.0 * u2 - 1.0);
          break;
        case 2:  // near-diagonal at log-uniform separations
          x = N * (2.0 * u0 - 1.0);
          y = x + (u2 < 0.5 ? -1.0 : 1.0) * std::pow(10.0, -12.0 * u1);
          break;
        case 3:  // near-diagonal straddling the unit circle
          x = (u1 < 0.5 ? -1.0 : 1.0) * (1.0 + (u0 - 0.5) * 0.02);
          y = x + (u3 < 0.5 ? -1.0 : 1.0) * std::pow(10.0, -12.0 * u2);
          break;
        default:
          x = N * (2.0 * u0 - 1.0);
          y = N * (2.0 * u1 - 1.0);
      }
      x = std::clamp(x, -N, N);
      y = std::clamp(y, -N, N);
      const double gap = std::fabs(x - y);
      const double lhs_b = std::fabs(model.b(x) - model.b(y));
      const double lhs_s = std::fabs(model.s(x) - model.s(y));
      const double unit_b = logN * gap + defect;
      const double unit_s = sqlogN * gap + defect;
      if (lhs_b > C * unit_b) ++dl.violations;
      if (lhs_s > C * unit_s) ++sl.violations;
      dl.c_needed = std::max(dl.c_needed, lhs_b / unit_b);
      sl.c_needed = std::max(sl.c_needed, lhs_s / unit_s);
      if (lhs_b - C * unit_b > worst_d) {
        worst_d = lhs_b - C * unit_b;
        dl.worst_lhs = lhs_b;
        dl.worst_rhs = C * unit_b;
        dl.worst_x = x;
        dl.worst_y = y;
      }
      if (lhs_s - C * unit_s > worst_s) {
        worst_s = lhs_s - C * unit_s;
        sl.worst_lhs = lhs_s;
        sl.worst_rhs = C * unit_s;
        sl.worst_x = x;
        sl.worst_y = y;
      }
    }
    rep.drift.push_back(dl);
    rep.diff.push_back(sl);
  }
  double cmax = 0.0;
  for (const auto& l : rep.drift) cmax = std::max(cmax, l.c_needed);
  for (const auto& l : rep.diff) cmax = std::max(cmax, l.c_needed);
  if (rep.drift_violations() + rep.diff_violations() > 0) rep.C_est = cmax;
  return rep;
}

GrowthReport verify_growth(const Model& model, double K, std::int64_t n_samples,
                           const rng::Stream& s) {
  if (!(K > 1.0)) throw ConfigError("growth audit needs K > 1");
  if (!model.scalar()) throw ConfigError("growth audit is 1-D");
  GrowthReport rep;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const std::uint64_t c0 = static_cast<std::uint64_t>(i) * 2;
    const double u = rng::uniform01(s, c0);
    const double sign = rng::uniform01(s, c0 + 1) < 0.5 ? -1.0 : 1.0;
    const double ax = K * std::pow(10.0, 6.0 * u);
    const double x = sign * ax;
    const double L = std::log(ax);
    const double sv = model.s(x);
    const double r_s = (sv * sv) / (ax * ax * L + 1.0);
    const double r_b = std::fabs(model.b(x)) / (ax * L + 1.0);
    const double r = std::max(r_s, r_b);
    if (r > rep.C_fit) {
      rep.C_fit = r;
      rep.worst_x = x;
    }
    if (u < 0.5)
      rep.C_low = std::max(rep.C_low, r);
    else
      rep.C_high = std::max(rep.C_high, r);
  }
  // a coefficient genuinely inside the growth class has a range-stable
  // constant; a super-class coefficient (e.g. x^2) fits only with C
  // exploding as the range grows
  rep.holds = rep.C_high <= 2.0 * rep.C_low + 1e-12;
  return rep;
}

std::vector<GapRow> unit_gap_probe(const Model& model,
                                   const std::vector<double>& x_grid) {
  if (!model.scalar()) throw ConfigError("gap probe is 1-D");
  std::vector<GapRow> rows;
  for (const double x : x_grid) {
    if (!(x > 1.0)) throw ConfigError("gap probe grid points must be > 1");
    rows.push_back({x, std::fabs(model.b(x + 1.0) - model.b(x))});
  }
  return rows;
}

}  // namespace sde::coefficients
