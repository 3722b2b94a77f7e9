#pragma once

#include <cstdint>
#include <vector>

#include "sde/coefficients.hpp"
#include "sde/rng.hpp"

namespace sde::ldp {

struct Wilson {
  double lo = 0.0, hi = 1.0;
};

// 95% Wilson score interval for a binomial proportion.
Wilson wilson95(std::int64_t hits, std::int64_t trials);

struct LdpRow {
  double eps = 0.0;
  std::int64_t M = 0;
  std::int64_t hits = 0;
  double phat = 0.0;
  double lo95 = 0.0, hi95 = 0.0;
  // eps * log(phat); for zero-hit rows this is the one-sided upper bound
  // eps * log(hi95) and the row is excluded from slope fits
  double eps_log_phat = 0.0;
};

// P(exists grid k: |X^eps_k - x0| >= R_dom) per epsilon, M independent
// paths each. The model must be truncated (bounded) first.
std::vector<LdpRow> exit_probability_study(const coefficients::Model& model,
                                           double x0, double R_dom, double T,
                                           int level,
                                           const std::vector<double>& eps_list,
                                           std::int64_t M, double n_trunc,
                                           const rng::Stream& s, int workers);

// P(max_k |X^eps_k - phi_k| <= delta); phi given on the simulation grid.
std::vector<LdpRow> tube_probability_study(const coefficients::Model& model,
                                           double x0,
                                           const std::vector<double>& phi,
                                           double delta, double T, int level,
                                           const std::vector<double>& eps_list,
                                           std::int64_t M, double n_trunc,
                                           const rng::Stream& s, int workers);

struct GapRow {
  double eps = 0.0;
  int n = 0, n_ref = 0;
  std::int64_t M = 0;
  std::int64_t hits = 0;
  double phat = 0.0;
  double lo95 = 0.0, hi95 = 0.0;
};

// P(sup_k |X^eps at n_ref - X^eps at n| >= delta) with n_ref = n + 4 and
// the two levels coupled through one refined path. No exponent is claimed:
// the double limit (eps after n) is out of desk-scale reach; the probe
// only checks decay in n at fixed eps >= 0.05.
std::vector<GapRow> euler_gap_probe(const coefficients::Model& model,
                                    double x0, double delta,
                                    const std::vector<double>& eps_list,
                                    const std::vector<int>& n_list, double T,
                                    std::int64_t M, double n_trunc,
                                    const rng::Stream& s, int workers);

struct SlopeFit {
  double I_hat = 0.0;   // negated slope of log phat against 1/eps
  double stderr_ = 0.0; // binomial-model standard error of I_hat
  int rows = 0;         // rows with hits > 0 used by the fit
};

// Weighted least squares of log phat on 1/eps with intercept; weights are
// the inverse variances of log phat under the binomial model (~ hits).
// Needs >= 2 rows with hits.
SlopeFit fit_rate(const std::vector<LdpRow>& rows);

}  // namespace sde::ldp
