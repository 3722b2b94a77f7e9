#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sde/rng.hpp"

namespace sde::coefficients {

// Evaluable drift/diffusion pair. The scalar callables are the primary
// representation (every built-in family is one-dimensional); d > 1 models
// are diagonal extensions evaluated componentwise. Derivatives use the
// subgradient-0 convention at the kinks x = 0 and |x| = 1: those points
// are hit with probability zero and the optimizer only needs a measurable
// selection there.
struct Model {
  std::string name;
  int d = 1;  // state dimension
  int m = 1;  // noise dimension (== d for diagonal extensions)
  std::function<double(double)> b;   // drift
  std::function<double(double)> s;   // diffusion
  std::function<double(double)> db;  // d/dx drift
  std::function<double(double)> ds;  // d/dx diffusion
  std::vector<double> fixed_points;  // per-component coordinates, exact zeros
  bool bounded = false;
  double bound = std::numeric_limits<double>::infinity();
  // where the coefficients are guaranteed undistorted: +inf for naturally
  // bounded models, R for truncate(., R), 0 when unbounded
  double trunc_radius = 0.0;

  bool scalar() const { return d == 1 && m == 1; }
};

// b(x) = x log|x|, s(x) = x sqrt(|log|x||), extended by 0 at x = 0; both
// vanish exactly at {-1, 0, 1} via an explicit branch.
Model loglog();

// b(x) = |x|^alpha |log|x||^(2 beta), s(x) = |x|^alpha |log|x||^beta,
// extended by 0 at x = 0. Requires 0 <= beta <= 1/2 <= alpha <= 1.
Model alphabeta(double alpha, double beta);

// b(x) = a x, s(x) = sigma (constant).
Model linear(double a, double sigma);

// Polynomial pair b(x) = sum bc[i] x^i, s(x) = sum sc[i] x^i ("custom").
Model custom_poly(std::vector<double> bc, std::vector<double> sc);

// Same diffusion, drift shifted by a constant: b(x) + delta. Used by the
// ordering experiments.
Model with_drift_offset(const Model& base, double delta);

// Diagonal d-dimensional extension of a scalar model (m = d).
Model diagonal(const Model& base, int d);

// "loglog" | "alphabeta:a,b" | "linear:a,s"; "custom" needs coefficient
// vectors and is only reachable through the JSON config.
Model parse(const std::string& spec);

// sup of max(|b|, |s|) over |x| <= R: 10^4-point grid + golden-section
// polish around the best cell. Scalar models only.
double sup_abs_on_ball(const Model& model, double R);

enum class TruncMode { clamp, cutoff };

struct TruncationSpec {
  double radius = 1.0;
  TruncMode mode = TruncMode::clamp;
};

// clamp: coefficient clipped to [-(m_R+1), m_R+1] with m_R = sup on |x|<=R.
// cutoff: coefficient * phi(x) with a C^2 smoothstep phi that is exactly 1
// on |x| <= R and exactly 0 on |x| >= R+1. Both results are flagged bounded.
Model truncate(const Model& model, const TruncationSpec& spec);

// Audit of the local quasi-Lipschitz condition on balls B(N): for sampled
// pairs x, y in [-N, N],
//   drift line:      |b(x)-b(y)| <= C log N |x-y| + C log N / N^mu
//   diffusion line:  |s(x)-s(y)| <= C sqrt(log N) |x-y| + C log N / N^mu
// Sampling is uniform with stratified oversampling near |x| in {0, 1} and
// near the diagonal. A failed line is data, not an error.
struct EnvelopeLineReport {
  std::int64_t violations = 0;
  double worst_lhs = 0.0;   // at the worst-margin sample
  double worst_rhs = 0.0;
  double worst_x = 0.0, worst_y = 0.0;
  double c_needed = 0.0;    // smallest C passing all samples at the given mu
};

struct EnvelopeReport {
  double C = 0.0, mu = 0.0;          // as supplied
  std::vector<double> N_grid;
  std::vector<EnvelopeLineReport> drift;  // one per N
  std::vector<EnvelopeLineReport> diff;
  double C_est = 0.0;  // tightest admissible C at the supplied mu (max over
                       // lines and N); equals supplied C when nothing fails
  double mu_est = 0.0;
  std::int64_t drift_violations() const;
  std::int64_t diff_violations() const;
};

EnvelopeReport verify_envelope(const Model& model, double C, double mu,
                               const std::vector<double>& N_grid,
                               std::int64_t n_samples, const rng::Stream& s);

// Growth audit: samples |x| log-uniformly in (K, 1e6*K] and fits the
// smallest C with |s(x)|^2 <= C (x^2 log|x| + 1) and |b(x)| <= C (|x|
// log|x| + 1). "holds" compares the fit on the lower and upper half of the
// range: a coefficient inside the growth class has a stable constant,
// while e.g. b(x) = x^2 fits only with C growing with the range.
struct GrowthReport {
  bool holds = false;
  double C_fit = 0.0;
  double C_low = 0.0, C_high = 0.0;  // per-subrange fits
  double worst_x = 0.0;
};

GrowthReport verify_growth(const Model& model, double K, std::int64_t n_samples,
                           const rng::Stream& s);

// Unit-shift drift gap g(x) = |b(x+1) - b(x)| on a grid of points > 1.
// Unbounded growth of g certifies the drift sits outside every global
// modulus class of the form |x-y| sqrt(log 1/|x-y|).
struct GapRow {
  double x = 0.0, g = 0.0;
};
std::vector<GapRow> unit_gap_probe(const Model& model,
                                   const std::vector<double>& x_grid);

}  // namespace sde::coefficients
