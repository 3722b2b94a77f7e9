#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sde/coefficients.hpp"
#include "sde/rng.hpp"

namespace sde::skeleton {

// Piecewise-constant control rates on the dyadic grid; the induced h is
// continuous piecewise-linear with h(0) = 0 and the energy integral is an
// exact finite sum, not quadrature.
struct Control {
  int level = 0;
  double T = 1.0;  // integer multiple of 2^-level
  std::vector<double> hdot;  // one rate per grid cell, scalar controls

  std::int64_t cells() const { return static_cast<std::int64_t>(hdot.size()); }
};

// Sum_k hdot_k^2 2^-level, pairwise-summed then scaled once.
double energy(const Control& c);

enum class OdeMethod { euler, rk4 };

struct OdeTrajectory {
  int level = 0;
  double T = 1.0;
  std::vector<double> values;
  bool invalid = false;
  std::int64_t invalid_index = -1;
};

// Controlled skeleton ODE dX = (s(X) hdot + b(X)) dt. euler reproduces the
// discrete recursion frozen at grid times; rk4 integrates the same
// right-hand side (hdot is cell-constant, so every rk4 substep sees an
// autonomous field) and serves as the high-accuracy reference at
// level_out = control level + 4.
OdeTrajectory solve_skeleton(const coefficients::Model& model, double x0,
                             const Control& c, OdeMethod method,
                             int level_out);

struct ConsistencyRow {
  int n = 0;
  double gap = 0.0;  // sup over level-n grid of |X^n - X_rk4|
};

struct ConsistencyReport {
  std::vector<ConsistencyRow> rows;
  double slope = 0.0;  // LS slope of log2 gap vs n
};

ConsistencyReport skeleton_consistency(const coefficients::Model& model,
                                       double x0, const Control& c,
                                       const std::vector<int>& n_grid);

struct MinimizeOptions {
  double tol = 1e-4;        // constraint residual target
  double w0 = 1.0;          // first penalty weight
  double w_factor = 10.0;   // multiplied each outer round
  int max_outer = 8;        // weights w0 * factor^(0..7)
  int max_inner = 500;      // quasi-Newton iterations per round
  double gtol = 1e-8;       // inner gradient-norm stop
  int lbfgs_memory = 10;
  rng::Stream check_stream; // coordinates for the finite-difference check
};

struct TraceRow {
  int outer = 0;
  double w = 0.0;
  double energy = 0.0;
  double residual = 0.0;
  int inner_iters = 0;
};

struct RateEstimate {
  double value = 0.0;     // 0.5 * energy(h*)
  double residual = 0.0;  // endpoint distance or max tube excess
  bool converged = false;
  int outer_rounds = 0;
  int inner_iters = 0;
  Control control;
  std::vector<double> xpath;  // skeleton solution under h*
  std::vector<TraceRow> trace;
  double grad_check_err = 0.0;  // max rel error of the pre-flight check
  double dir_deriv = 0.0;       // <grad P_w, h*> at the final iterate
};

// Minimizes P_w(h) = 0.5 energy(h) + w |X_h(T) - y|^2 by L-BFGS with a
// cubic-interpolation Wolfe line search and analytically back-propagated
// gradients through the discrete recursion; w is multiplied by 10 from w0
// until the endpoint residual meets tol or the rounds run out. A central
// finite-difference gradient check (step 1e-6, 20 coordinates, rel err <
// 1e-5) runs before the descent and aborts on failure.
RateEstimate minimize_rate_endpoint(const coefficients::Model& model,
                                    double x0, double y, double T, int level,
                                    const MinimizeOptions& opts);

// Same outer loop with the hinge penalty
// w * Sum_k max(0, |X_h(t_k) - phi_k| - delta)^2; phi lives on the control
// grid (cells+1 values, phi[0] = x0).
RateEstimate minimize_rate_tube(const coefficients::Model& model, double x0,
                                const std::vector<double>& phi, double delta,
                                double T, int level,
                                const MinimizeOptions& opts);

}  // namespace sde::skeleton
