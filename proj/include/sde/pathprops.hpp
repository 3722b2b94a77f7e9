#pragma once

#include <cstdint>
#include <vector>

#include "sde/coefficients.hpp"
#include "sde/euler.hpp"
#include "sde/rng.hpp"

namespace sde::pathprops {

// Every study here drives all trajectories of one replication with the
// same Brownian path (synchronous coupling) and parallelizes over
// replications with keyed substreams; results are pure in (config, seed).

struct ContinuityRow {
  double delta = 0.0;
  double est = 0.0;  // mean sup_k |X(x0) - X(x0+delta)|^2
  double stderr_ = 0.0;
  std::int64_t excluded = 0;
};

std::vector<ContinuityRow> continuity_study(
    const coefficients::Model& model, double x0,
    const std::vector<double>& deltas, double T, int n, std::int64_t M,
    double eps, double n_trunc, const rng::Stream& s, int workers);

struct GapStatistics {
  std::int64_t M = 0;
  double tau = 0.0;
  std::vector<double> min_gap;  // per path, min_k |X_k(x) - X_k(y)|
  std::vector<double> max_gap;
  std::int64_t sign_flips = 0;  // strict sign changes of X(x) - X(y), 1-D
  double fraction_below_tau = 0.0;
  double global_min_gap = 0.0;
  std::int64_t excluded = 0;
};

GapStatistics confluence_study(const coefficients::Model& model, double x,
                               double y, double T, int n, std::int64_t M,
                               double tau, double eps, double n_trunc,
                               const rng::Stream& s, int workers);

struct ComparisonResult {
  std::int64_t M = 0;
  std::int64_t checked = 0;     // (path, grid point) pairs
  std::int64_t violations = 0;  // strict X1 > X2
  double violation_fraction = 0.0;
  std::int64_t excluded = 0;
};

// Drifts must satisfy b1 <= b2 pointwise (spot-checked on a grid; failure
// rejects the input) with shared diffusion and x1_0 <= x2_0.
ComparisonResult comparison_study(const coefficients::Model& m1,
                                  const coefficients::Model& m2, double x1_0,
                                  double x2_0, double T, int n, std::int64_t M,
                                  double eps, double n_trunc,
                                  const rng::Stream& s, int workers);

struct FlowSnapshot {
  double t = 1.0;
  std::vector<double> grid;          // sorted starts
  std::vector<double> mean_terminal; // per start
  std::vector<double> min_terminal;
  std::vector<double> max_terminal;
  std::int64_t adjacent_pairs = 0;   // M * (J-1)
  std::int64_t violations = 0;       // adjacent-pair order violations
  double violation_fraction = 0.0;
  std::int64_t excluded = 0;
};

FlowSnapshot flow_snapshot(const coefficients::Model& model,
                           const std::vector<double>& grid, double t, int n,
                           std::int64_t M, double eps, double n_trunc,
                           const rng::Stream& s, int workers);

struct MomentPair {
  double x = 0.0, s = 0.0;  // start x observed at time s
  double y = 0.0, t = 0.0;  // start y observed at time t
};

struct MomentRow {
  MomentPair pair;
  double moment = 0.0;  // mean |X_t(x) - X_s(y)|^(2p)
  double stderr_ = 0.0;
  double envelope = 0.0;  // |t-s|^p + |x-y|^2p + |x-y|^(p/2) + |x-y|^(5p/2)
  double ratio = 0.0;
  std::int64_t excluded = 0;
};

struct MomentReport {
  std::vector<MomentRow> rows;
  double c_fit = 0.0;  // max ratio: smallest c with moment <= c * envelope
  double c_fit_hi95 = 0.0;
};

// Requires a bounded (truncated) model; the moment bound assumes bounded
// coefficients and silent truncation would hide that hypothesis.
MomentReport moment_modulus_study(const coefficients::Model& model,
                                  const std::vector<MomentPair>& pairs,
                                  double p, int n, std::int64_t M, double eps,
                                  double n_trunc, const rng::Stream& s,
                                  int workers);

}  // namespace sde::pathprops
