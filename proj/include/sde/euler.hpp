#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sde/brownian.hpp"
#include "sde/coefficients.hpp"
#include "sde/rng.hpp"

namespace sde::euler {

inline constexpr double kDefaultTrunc = 1e6;

struct Trajectory {
  int level = 0;
  double T = 1.0;
  int d = 1;
  double epsilon = 1.0;
  double n_trunc = kDefaultTrunc;
  std::vector<double> values;  // (steps+1) x d row-major
  // first grid k with |X_k| > n_trunc; values are frozen (constant) from
  // here on; -1 when the trajectory never exits
  std::int64_t exit_index = -1;
  // non-finite state before exit detection; such paths are excluded from
  // study means and counted
  bool invalid = false;
  std::int64_t invalid_index = -1;

  std::int64_t steps() const {
    return static_cast<std::int64_t>(values.size()) / d - 1;
  }
  double value(std::int64_t k, int c = 0) const { return values[k * d + c]; }
  bool exited() const { return exit_index >= 0; }
};

// Explicit scheme on the dyadic grid:
//   X[k+1] = X[k] + b(X[k]) 2^-n + sqrt(eps) sigma(X[k]) dW_k
// with dW_k = sqrt(eps)-scaled value difference, computed as
// (sqrt(eps)*W[k+1] - sqrt(eps)*W[k]) so that scaling the path by sqrt(eps)
// and running with eps = 1 reproduces the same trajectory bitwise.
// sim_level <= path.level selects the dyadic sub-grid (stride reads), which
// is bitwise the same as restricting the path first.
void simulate_into(const coefficients::Model& model,
                   const brownian::DyadicPath& path, int sim_level,
                   const double* x0, double eps, double n_trunc,
                   Trajectory& out);

Trajectory simulate(const coefficients::Model& model,
                    const brownian::DyadicPath& path, double x0,
                    double eps = 1.0, double n_trunc = kDefaultTrunc);

// Two solutions on one noise realization (synchronous coupling); joint
// exit: both freeze at the first index where either leaves the ball.
std::pair<Trajectory, Trajectory> simulate_pair(
    const coefficients::Model& model, const brownian::DyadicPath& path,
    double x0, double y0, double eps = 1.0, double n_trunc = kDefaultTrunc);

struct StrongErrorRow {
  int n = 0;
  std::int64_t M = 0;
  std::int64_t excluded = 0;
  double est = 0.0;      // mean of sup_k |X_ref - X_n|^2 over the coarse grid
  double stderr_ = 0.0;
};

// Coupled-level study: each path is sampled at n_min and refined up to
// n_ref, so all levels share one Brownian path; errors are sup-squares on
// the common (n_min) grid against the n_ref solution.
std::vector<StrongErrorRow> strong_error_study(
    const coefficients::Model& model, double x0, double T, int n_min,
    int n_max, int n_ref, std::int64_t M, double eps, double n_trunc,
    const rng::Stream& s, int workers);

struct TailCheck {
  double empirical = 0.0;
  double bound = 0.0;  // 2 d exp(-(R - sqrt(d) B T)^2 / (2 d A^2 T))
  std::int64_t hits = 0;
  std::int64_t M = 0;
};

// eta_t = A W_t + B t 1 in R^d; empirical P(sup_grid |eta| >= R) at the
// given level against the closed-form tail bound (worst-case constant
// coefficients |e| <= A, |f| <= B).
TailCheck tail_bound_check(double A, double B, int d, double T, double R,
                           std::int64_t M, const rng::Stream& s, int workers,
                           int level = 14);

}  // namespace sde::euler
