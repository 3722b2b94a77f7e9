#include <cmath>
#include <vector>

#include "doctest.h"
#include "sde/coefficients.hpp"
#include "sde/rng.hpp"
#include "sde/skeleton.hpp"
#include "sde/util.hpp"

using namespace sde;
using skeleton::Control;
using skeleton::MinimizeOptions;
using skeleton::OdeMethod;

namespace {

Control constant_control(double value, double T, int level) {
  Control c;
  c.level = level;
  c.T = T;
  std::int64_t cells = 0;
  dyadic_steps(T, level, &cells);
  c.hdot.assign(static_cast<std::size_t>(cells), value);
  return c;
}

MinimizeOptions opts_with_seed(std::uint64_t seed) {
  MinimizeOptions o;
  o.check_stream = rng::make_stream(seed, 0);
  return o;
}

}  // namespace

TEST_CASE("energy: constant, zero, and quadratic scaling") {
  const Control c3 = constant_control(3.0, 2.0, 5);
  CHECK(skeleton::energy(c3) == 18.0);  // c^2 T, exact dyadic sum
  CHECK(skeleton::energy(constant_control(0.0, 1.0, 8)) == 0.0);

  Control ramp = constant_control(0.0, 1.0, 6);
  for (std::size_t k = 0; k < ramp.hdot.size(); ++k)
    ramp.hdot[k] = 0.3 * static_cast<double>(k) - 1.0;
  Control doubled = ramp;
  for (double& v : doubled.hdot) v *= 2.0;
  CHECK(skeleton::energy(doubled) == 4.0 * skeleton::energy(ramp));

  Control scaled = ramp;
  for (double& v : scaled.hdot) v *= 1.3;
  CHECK(skeleton::energy(scaled) ==
        doctest::Approx(1.69 * skeleton::energy(ramp)).epsilon(1e-14));
}

TEST_CASE("skeleton flow: rk4 nails the closed form, euler converges slowly") {
  const auto m = coefficients::loglog();
  const Control zero = constant_control(0.0, 1.0, 0);
  const double target = 6.5808859910179214;  // exp(e log 2) = 2^e

  const auto rk = skeleton::solve_skeleton(m, 2.0, zero, OdeMethod::rk4, 10);
  CHECK_FALSE(rk.invalid);
  CHECK(std::fabs(rk.values.back() - target) / target < 1e-8);

  const auto eu = skeleton::solve_skeleton(m, 2.0, zero, OdeMethod::euler, 14);
  CHECK(std::fabs(eu.values.back() - target) / target < 1e-3);
  // and euler genuinely is the coarse scheme: the gap is visible
  CHECK(std::fabs(eu.values.back() - target) / target > 1e-5);
}

TEST_CASE("skeleton flow: linear control case is exact on the dyadic grid") {
  const auto m = coefficients::linear(0.0, 1.0);  // b = 0, s = 1
  const Control one = constant_control(1.0, 1.0, 4);
  for (OdeMethod meth : {OdeMethod::euler, OdeMethod::rk4}) {
    const auto tr = skeleton::solve_skeleton(m, 0.0, one, meth, 8);
    for (std::size_t k = 0; k < tr.values.size(); ++k)
      CHECK(tr.values[k] == std::ldexp(static_cast<double>(k), -8));
  }
  // fractional rates keep first-order accuracy without bitwise luck
  const Control c = constant_control(0.3, 1.0, 4);
  const auto tr = skeleton::solve_skeleton(m, 0.25, c, OdeMethod::rk4, 8);
  CHECK(tr.values.back() == doctest::Approx(0.55).epsilon(1e-12));
}

TEST_CASE("skeleton flow: fixed points hold under zero control") {
  const auto m = coefficients::loglog();
  const Control zero = constant_control(0.0, 1.0, 2);
  for (OdeMethod meth : {OdeMethod::euler, OdeMethod::rk4}) {
    const auto tr = skeleton::solve_skeleton(m, 1.0, zero, meth, 8);
    for (double v : tr.values) CHECK(v == 1.0);
  }
}

TEST_CASE("skeleton solver validates control and levels") {
  const auto m = coefficients::loglog();
  Control bad = constant_control(0.0, 1.0, 4);
  bad.hdot.pop_back();
  CHECK_THROWS_AS(skeleton::solve_skeleton(m, 2.0, bad, OdeMethod::rk4, 8),
                  ConfigError);
  const Control ok = constant_control(0.0, 1.0, 4);
  CHECK_THROWS_AS(skeleton::solve_skeleton(m, 2.0, ok, OdeMethod::rk4, 3),
                  ConfigError);  // level_out below the control level
  CHECK_THROWS_AS(skeleton::solve_skeleton(m, 2.0, ok, OdeMethod::rk4, 31),
                  ConfigError);
}

TEST_CASE("consistency ladder: gaps shrink at first order, constant case exact") {
  const auto m = coefficients::loglog();
  Control ramp = constant_control(0.0, 1.0, 6);
  const double top = std::sqrt(3.0);  // e(h) ~ top^2/3 = 1
  for (std::size_t k = 0; k < ramp.hdot.size(); ++k)
    ramp.hdot[k] = top * (static_cast<double>(k) + 0.5) /
                   static_cast<double>(ramp.hdot.size());
  const auto rep = skeleton::skeleton_consistency(m, 2.0, ramp,
                                                  {6, 7, 8, 9, 10, 11, 12});
  REQUIRE(rep.rows.size() == 7);
  for (std::size_t i = 0; i + 1 < rep.rows.size(); ++i) {
    CHECK(rep.rows[i + 1].gap < rep.rows[i].gap);
    const double ratio = rep.rows[i + 1].gap / rep.rows[i].gap;
    CHECK(ratio > 0.4);
    CHECK(ratio < 0.6);
  }
  CHECK(rep.slope < -0.8);
  CHECK(rep.slope > -1.2);

  const auto exact = skeleton::skeleton_consistency(
      coefficients::linear(0.0, 1.0), 0.0, constant_control(1.0, 1.0, 4),
      {4, 6, 8});
  for (const auto& r : exact.rows) CHECK(r.gap == 0.0);
}

TEST_CASE("endpoint rate: free Brownian motion costs (y-x)^2 / 2T") {
  const auto m = coefficients::linear(0.0, 1.0);
  const auto est = skeleton::minimize_rate_endpoint(m, 0.0, 1.0, 1.0, 10,
                                                    opts_with_seed(1));
  CHECK(est.converged);
  CHECK(est.residual <= 1e-4);
  CHECK(std::fabs(est.value - 0.5) <= 0.005);
  CHECK(est.grad_check_err < 1e-5);
  CHECK(std::fabs(est.dir_deriv) <= 1e-8);
  // the optimal control is (nearly) the constant rate 1
  double lo = 1e300, hi = -1e300;
  for (double u : est.control.hdot) {
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo > 0.95);
  CHECK(hi < 1.05);
  CHECK(est.xpath.front() == 0.0);
  CHECK(std::fabs(est.xpath.back() - 1.0) <= 1e-2);
}

TEST_CASE("endpoint rate: the deterministic flow endpoint is free") {
  const auto m = coefficients::loglog();
  const Control zero = constant_control(0.0, 1.0, 8);
  const auto flow = skeleton::solve_skeleton(m, 2.0, zero, OdeMethod::euler, 8);
  const auto est = skeleton::minimize_rate_endpoint(m, 2.0, flow.values.back(),
                                                    1.0, 8, opts_with_seed(2));
  CHECK(est.converged);
  CHECK(est.value <= 1e-6);
}

TEST_CASE("endpoint rate: mean reversion over a long horizon") {
  const auto m = coefficients::linear(-1.0, 1.0);  // dX = -X dt + dh
  const auto est = skeleton::minimize_rate_endpoint(m, 0.0, 1.0, 5.0, 9,
                                                    opts_with_seed(3));
  CHECK(est.converged);
  // stationary cost of pushing one unit against the drift:
  // I = y^2 / (1 - exp(-2T)) at T = 5
  CHECK(std::fabs(est.value - 1.0000454019910097) / 1.0000454019910097 < 0.15);
}

TEST_CASE("endpoint rate: unreachable targets report non-convergence") {
  const auto m = coefficients::loglog();  // 0 is an exact fixed point
  const auto est = skeleton::minimize_rate_endpoint(m, 0.0, 1.0, 1.0, 6,
                                                    opts_with_seed(4));
  CHECK_FALSE(est.converged);
  CHECK(est.residual > 0.5);
  CHECK(est.outer_rounds == 8);  // burned every penalty round trying
}

TEST_CASE("endpoint rate: gradient check runs on the super-linear model") {
  const auto m = coefficients::loglog();
  const auto est = skeleton::minimize_rate_endpoint(m, 2.0, 4.0, 1.0, 8,
                                                    opts_with_seed(5));
  CHECK(est.grad_check_err < 1e-5);
  CHECK(est.converged);
  CHECK(est.value > 0.0);
  CHECK(std::fabs(est.dir_deriv) <= 1e-8);
  // trace rows expose the whole outer loop
  CHECK(est.trace.size() == static_cast<std::size_t>(est.outer_rounds));
  for (const auto& row : est.trace) CHECK(row.w > 0.0);
}

TEST_CASE("minimize options are validated") {
  const auto m = coefficients::linear(0.0, 1.0);
  MinimizeOptions bad = opts_with_seed(6);
  bad.tol = 0.0;
  CHECK_THROWS_AS(skeleton::minimize_rate_endpoint(m, 0.0, 1.0, 1.0, 6, bad),
                  ConfigError);
  bad = opts_with_seed(6);
  bad.w0 = -1.0;
  CHECK_THROWS_AS(skeleton::minimize_rate_endpoint(m, 0.0, 1.0, 1.0, 6, bad),
                  ConfigError);
  bad = opts_with_seed(6);
  bad.max_outer = 0;
  CHECK_THROWS_AS(skeleton::minimize_rate_endpoint(m, 0.0, 1.0, 1.0, 6, bad),
                  ConfigError);
  CHECK_THROWS_AS(skeleton::minimize_rate_endpoint(m, 0.0, 1.0, 1.0, 17,
                                                   opts_with_seed(6)),
                  ConfigError);  // level cap
}

TEST_CASE("tube rate: straight line through flat noise") {
  const auto m = coefficients::linear(0.0, 1.0);
  const int level = 8;
  std::int64_t cells = 0;
  dyadic_steps(1.0, level, &cells);
  std::vector<double> phi(static_cast<std::size_t>(cells) + 1);
  for (std::int64_t k = 0; k <= cells; ++k)
    phi[static_cast<std::size_t>(k)] =
        static_cast<double>(k) / static_cast<double>(cells);
  const auto est = skeleton::minimize_rate_tube(m, 0.0, phi, 0.05, 1.0, level,
                                                opts_with_seed(7));
  CHECK(est.converged);
  CHECK(est.value >= 0.45);
  CHECK(est.value <= 0.5);

  // a vacuous tube costs nothing
  const auto loose = skeleton::minimize_rate_tube(m, 0.0, phi, 50.0, 1.0,
                                                  level, opts_with_seed(8));
  CHECK(loose.value <= 1e-6);
}

TEST_CASE("tube rate: tightening the tube never gets cheaper") {
  const auto m = coefficients::linear(0.0, 1.0);
  const int level = 6;
  std::int64_t cells = 0;
  dyadic_steps(1.0, level, &cells);
  std::vector<double> phi(static_cast<std::size_t>(cells) + 1);
  for (std::int64_t k = 0; k <= cells; ++k)
    phi[static_cast<std::size_t>(k)] =
        static_cast<double>(k) / static_cast<double>(cells);
  double prev = -1.0;
  for (double delta : {0.4, 0.2, 0.1, 0.05}) {
    const auto est = skeleton::minimize_rate_tube(m, 0.0, phi, delta, 1.0,
                                                  level, opts_with_seed(9));
    CHECK(est.converged);
    CHECK(est.value >= prev - 1e-9);
    prev = est.value;
  }
}

TEST_CASE("tube rate: the deterministic flow tube is free") {
  const auto m = coefficients::loglog();
  const int level = 7;
  const Control zero = constant_control(0.0, 1.0, level);
  const auto flow = skeleton::solve_skeleton(m, 2.0, zero, OdeMethod::euler,
                                             level);
  const auto est = skeleton::minimize_rate_tube(m, 2.0, flow.values, 0.25, 1.0,
                                                level, opts_with_seed(10));
  CHECK(est.converged);
  CHECK(est.value <= 1e-6);
}

TEST_CASE("tube rate validates the reference path") {
  const auto m = coefficients::linear(0.0, 1.0);
  std::vector<double> phi(65, 0.0);
  phi[0] = 0.5;  // must equal x0
  CHECK_THROWS_AS(skeleton::minimize_rate_tube(m, 0.0, phi, 0.1, 1.0, 6,
                                               opts_with_seed(11)),
                  ConfigError);
  std::vector<double> short_phi(10, 0.0);
  CHECK_THROWS_AS(skeleton::minimize_rate_tube(m, 0.0, short_phi, 0.1, 1.0, 6,
                                               opts_with_seed(11)),
                  ConfigError);
}
