// Acceptance gate: every shipped claim checked end to end, one line each.
// Exit code is the number of failed checks (0 = all green).
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sde/brownian.hpp"
#include "sde/coefficients.hpp"
#include "sde/euler.hpp"
#include "sde/experiment.hpp"
#include "sde/ldp.hpp"
#include "sde/pathprops.hpp"
#include "sde/rng.hpp"
#include "sde/skeleton.hpp"
#include "sde/util.hpp"

namespace fs = std::filesystem;
using namespace sde;

namespace {

constexpr std::uint64_t kSeed = 20260825;

int workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(8u, std::max(1u, hc)));
}

struct Outcome {
  bool pass = false;
  std::string measured;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// 1. Exact zeros of both coefficients pin every trajectory bitwise.
Outcome crit_fixed_points() {
  const auto m = coefficients::loglog();
  const auto st = rng::make_stream(kSeed, 1);
  const double starts[3] = {-1.0, 0.0, 1.0};
  const std::int64_t M = 1000;
  double max_dev = 0.0;
  brownian::DyadicPath path;
  euler::Trajectory traj;
  for (int s = 0; s < 3; ++s) {
    const double x0 = starts[s];
    for (std::int64_t i = 0; i < M; ++i) {
      brownian::sample_path_into(
          rng::substream(st, static_cast<std::uint64_t>(s) * M +
                                 static_cast<std::uint64_t>(i)),
          1.0, 10, 1, path);
      euler::simulate_into(m, path, 10, &x0, 1.0, euler::kDefaultTrunc, traj);
      if (traj.invalid) return {false, "unexpected invalid trajectory"};
      for (std::int64_t k = 0; k <= traj.steps(); ++k)
        max_dev = std::max(max_dev, std::fabs(traj.value(k) - x0));
    }
  }
  return {max_dev == 0.0, "max deviation " + fmt(max_dev) +
                              " over 3x1000 paths at n=10"};
}

// 2. Zero-control flow against the closed-form solution 2^(e) at t=1.
Outcome crit_skeleton_closed_form() {
  const auto m = coefficients::loglog();
  const double target = 6.5808859910179214;
  skeleton::Control zero;
  zero.level = 0;
  zero.T = 1.0;
  zero.hdot = {0.0};
  const auto rk =
      skeleton::solve_skeleton(m, 2.0, zero, skeleton::OdeMethod::rk4, 10);
  const auto eu =
      skeleton::solve_skeleton(m, 2.0, zero, skeleton::OdeMethod::euler, 14);
  const double rk_rel = std::fabs(rk.values.back() - target) / target;
  const double eu_rel = std::fabs(eu.values.back() - target) / target;
  return {rk_rel <= 1e-8 && eu_rel <= 1e-3,
          "rk4 rel err " + fmt(rk_rel) + ", euler rel err " + fmt(eu_rel)};
}

// 3. Coupled-level strong errors fall monotonically with separated CIs.
// Measured: the level means are dominated by rare paths that climb into the
// super-linear region, where the coarse chain runs far ahead of the fine
// one. sup^2 there behaves like exp(2 log X) whose fourth moment diverges
// (the exponential-moment threshold of log X at T=1 is ~2.54 < 4), so the
// standard error stays the size of the mean at any M and the 95% CIs never
// separate; strict monotonicity across seven sample means fails with every
// seed tried (0/8). Kept red deliberately; see README.
Outcome crit_strong_convergence() {
  const auto m = coefficients::loglog();
  const auto rows = euler::strong_error_study(
      m, 2.0, 1.0, 6, 12, 16, 500, 1.0, euler::kDefaultTrunc,
      rng::make_stream(kSeed, 3), workers());
  bool strict = true;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i)
    strict = strict && rows[i + 1].est < rows[i].est;
  const auto& a = rows.front();
  const auto& b = rows.back();
  const double gap =
      (a.est - 1.96 * a.stderr_) - (b.est + 1.96 * b.stderr_);
  return {strict && gap > 0.0,
          "est(6) " + fmt(a.est) + " .. est(12) " + fmt(b.est) +
              (strict ? ", strictly decreasing" : ", NOT monotone") +
              ", CI gap " + fmt(gap)};
}

// 4. Distinct starts never meet and never swap order.
// Measured: a few percent of pairs meet and order flips cluster near |x|=1.
// The diffusion coefficient has a square-root cusp at the fixed point 1
// (x*sqrt(|log x|) ~ sqrt(|x-1|)), so substituting u = -log x turns the
// dynamics near 1 into a branching-type diffusion that reaches u=0 in finite
// time with probability ~0.14 from x=0.6 by T=1; an independent textbook
// Euler run with a different RNG reproduces the same meet rate, absorption
// at exactly 1.0, and flip counts. No seed choice passes at M=1000. Kept
// red deliberately; see README.
Outcome crit_non_confluence() {
  const auto m = coefficients::loglog();
  const auto g = pathprops::confluence_study(m, 0.5, 0.6, 1.0, 12, 1000,
                                             1e-12, 1.0, euler::kDefaultTrunc,
                                             rng::make_stream(kSeed, 4),
                                             workers());
  return {g.fraction_below_tau == 0.0 && g.sign_flips == 0,
          "fraction below tau " + fmt(g.fraction_below_tau) + ", sign flips " +
              fmt(static_cast<double>(g.sign_flips)) + ", global min gap " +
              fmt(g.global_min_gap)};
}

// 5. Adding +1 to the drift keeps trajectories ordered.
Outcome crit_comparison() {
  const auto m1 = coefficients::loglog();
  const auto m2 = coefficients::with_drift_offset(m1, 1.0);
  const auto res = pathprops::comparison_study(m1, m2, 2.0, 2.0, 1.0, 12,
                                               1000, 1.0, euler::kDefaultTrunc,
                                               rng::make_stream(kSeed, 5),
                                               workers());
  return {res.violation_fraction <= 1e-3,
          "violation fraction " + fmt(res.violation_fraction) + " over " +
              fmt(static_cast<double>(res.checked)) + " checks"};
}

// 6. Drift regularity audit at C=2, mu=1 over four ball radii.
Outcome crit_envelope_audit() {
  const auto m = coefficients::loglog();
  const auto rep = coefficients::verify_envelope(
      m, 2.0, 1.0, {3.0, 10.0, 100.0, 1000.0}, 100000,
      rng::make_stream(kSeed, 6));
  const auto v = rep.drift_violations();
  return {v == 0, "drift violations " + fmt(static_cast<double>(v)) +
                      " across 4x100000 sampled pairs"};
}

// 7. Unit-shift drift gap ratio g(1e6)/g(10) must exceed 10.
// The measured ratio is ~4.42: g grows like log x, so the ratio of the two
// grid points is log(1e6)/log(10) plus lower-order terms, and no seed or
// tolerance choice moves it past 10. Kept red deliberately; see README.
Outcome crit_driftgap_ratio() {
  const auto m = coefficients::loglog();
  const auto rows = coefficients::unit_gap_probe(m, {10.0, 1e6});
  const double ratio = rows.back().g / rows.front().g;
  return {ratio > 10.0, "g(1e6)/g(10) = " + fmt(ratio)};
}

// 8. Additive-noise endpoint cost: I(0 -> 1, T=1) = 1/2.
Outcome crit_endpoint_rate() {
  const auto m = coefficients::linear(0.0, 1.0);
  skeleton::MinimizeOptions opts;
  opts.check_stream = rng::make_stream(kSeed, 8);
  const auto est = skeleton::minimize_rate_endpoint(m, 0.0, 1.0, 1.0, 10, opts);
  const bool ok = est.converged && std::fabs(est.value - 0.5) <= 0.005 &&
                  est.grad_check_err < 1e-5;
  return {ok, "value " + fmt(est.value) + ", grad check " +
                  fmt(est.grad_check_err) + ", converged " +
                  (est.converged ? "yes" : "no")};
}

// 9. Mean-reverting exit exponent vs the variational prediction.
Outcome crit_exit_exponent() {
  const auto m = coefficients::truncate(
      coefficients::linear(-1.0, 1.0), {2.0, coefficients::TruncMode::clamp});
  skeleton::MinimizeOptions opts;
  opts.check_stream = rng::make_stream(kSeed, 90);
  const auto up = skeleton::minimize_rate_endpoint(m, 0.0, 1.0, 5.0, 9, opts);
  const auto dn = skeleton::minimize_rate_endpoint(m, 0.0, -1.0, 5.0, 9, opts);
  if (!up.converged || !dn.converged)
    return {false, "variational prediction did not converge"};
  const double pred = std::min(up.value, dn.value);

  const auto rows = ldp::exit_probability_study(
      m, 0.0, 1.0, 5.0, 12, {0.25, 0.125, 1.0 / 12.0, 0.0625}, 200000,
      euler::kDefaultTrunc, rng::make_stream(kSeed, 9), workers());
  const auto fit = ldp::fit_rate(rows);
  const double rel = std::fabs(fit.I_hat - pred) / pred;
  std::string hits;
  for (const auto& r : rows) hits += (hits.empty() ? "" : "/") +
                                     std::to_string(r.hits);
  return {rel <= 0.30, "I_hat " + fmt(fit.I_hat) + " vs prediction " +
                           fmt(pred) + " (rel " + fmt(rel) + ", hits " +
                           hits + ")"};
}

// 10. Grid-sup tail of a driftless unit martingale against the closed bound
// and the reflection-principle mass at R=4.
Outcome crit_tail_bound() {
  const auto chk = euler::tail_bound_check(1.0, 0.0, 1, 1.0, 4.0, 1000000,
                                           rng::make_stream(kSeed, 10),
                                           workers(), 14);
  const double bound = 6.7092525580502371e-4;
  const double reflect = 1.266849673324797e-4;
  const bool ok = chk.empirical <= bound &&
                  chk.empirical >= 0.9 * reflect &&
                  chk.empirical <= 1.1 * reflect;
  return {ok, "empirical " + fmt(chk.empirical) + " (bound " + fmt(bound) +
                  ", window " + fmt(0.9 * reflect) + ".." +
                  fmt(1.1 * reflect) + ", hits " +
                  std::to_string(chk.hits) + ")"};
}

// 11. Rerun and worker-count invariance of the CSV artifacts.
std::string strip_generated(const std::string& text) {
  std::istringstream is(text);
  std::ostringstream os;
  std::string line;
  while (std::getline(is, line))
    if (line.rfind("# generated=", 0) != 0) os << line << "\n";
  return os.str();
}

std::string slurp(const std::string& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

Outcome crit_determinism() {
  const std::string cfg =
      R"({"kind":"converge","model":"loglog","seed":20260825,"x0":2,"T":1,
          "n_min":5,"n_max":8,"n_ref":10,"M":100})";
  const fs::path base = fs::temp_directory_path() / "sde_acceptance_det";
  fs::remove_all(base);
  const auto run = [&](const char* leaf, int w) {
    return experiment::run_config_text(cfg, (base / leaf).string(), -1, w);
  };
  const auto a = run("a", 1);
  const auto b = run("b", 1);
  const auto c = run("c", 8);
  if (a.artifacts.size() != b.artifacts.size() ||
      a.artifacts.size() != c.artifacts.size())
    return {false, "artifact counts differ"};
  for (std::size_t i = 0; i < a.artifacts.size(); ++i) {
    const auto ta = strip_generated(slurp(a.artifacts[i]));
    if (ta != strip_generated(slurp(b.artifacts[i])))
      return {false, "rerun changed " + a.artifacts[i]};
    if (ta != strip_generated(slurp(c.artifacts[i])))
      return {false, "worker count changed " + a.artifacts[i]};
  }
  const bool metrics_equal = a.metrics == b.metrics && a.metrics == c.metrics;
  return {metrics_equal,
          metrics_equal ? "2 reruns + workers {1,8}: identical bodies and metrics"
                        : "metrics differ between runs"};
}

// 12. Scheme-vs-refined deviation probability falls with the level.
Outcome crit_gap_probe() {
  const auto m = coefficients::truncate(
      coefficients::loglog(), {10.0, coefficients::TruncMode::clamp});
  const auto rows = ldp::euler_gap_probe(m, 2.0, 0.05, {0.1}, {6, 8, 10}, 1.0,
                                         10000, euler::kDefaultTrunc,
                                         rng::make_stream(kSeed, 12),
                                         workers());
  bool mono = true;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i)
    mono = mono && rows[i + 1].phat <= rows[i].phat;
  const bool separated = rows.front().lo95 > rows.back().hi95;
  std::ostringstream ph;
  for (const auto& r : rows) ph << (ph.tellp() > 0 ? " " : "") << fmt(r.phat);
  return {mono && separated,
          "phat by level: " + ph.str() +
              (mono ? ", non-increasing" : ", NOT monotone") +
              (separated ? ", first/last CIs separated"
                         : ", CIs overlap")};
}

struct Criterion {
  int id;
  const char* what;
  Outcome (*fn)();
};

const Criterion kCriteria[] = {
    {1, "fixed points are exact under the discrete scheme", crit_fixed_points},
    {2, "zero-control flow matches the closed form", crit_skeleton_closed_form},
    {3, "strong error decreases with level, CIs separate",
     crit_strong_convergence},
    {4, "coupled paths from distinct starts never meet", crit_non_confluence},
    {5, "ordered drifts keep coupled paths ordered", crit_comparison},
    {6, "drift regularity audit is clean at C=2, mu=1", crit_envelope_audit},
    {7, "unit-shift drift gap ratio exceeds 10", crit_driftgap_ratio},
    {8, "free endpoint rate equals one half", crit_endpoint_rate},
    {9, "exit exponent matches variational prediction within 30%",
     crit_exit_exponent},
    {10, "martingale tail bound and reflection window hold", crit_tail_bound},
    {11, "reruns and worker counts leave artifacts byte-identical",
     crit_determinism},
    {12, "scheme deviation probability falls with refinement",
     crit_gap_probe},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--only N]\n";
      return 2;
    }
  }
  int failures = 0, ran = 0;
  for (const auto& c : kCriteria) {
    if (only != 0 && c.id != only) continue;
    ++ran;
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    if (!out.pass) ++failures;
    std::cout << (out.pass ? "[PASS] " : "[FAIL] ") << c.id << ": " << c.what
              << " (" << out.measured << ")" << std::endl;
  }
  if (ran == 0) {
    std::cerr << "no such criterion: " << only << "\n";
    return 2;
  }
  if (only == 0)
    std::cout << (failures == 0 ? "all criteria passed"
                                : std::to_string(failures) +
                                      " criterion(s) failed")
              << std::endl;
  return failures == 0 ? 0 : 1;
}
