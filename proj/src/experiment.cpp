#include "sde/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sde/brownian.hpp"
#include "sde/coefficients.hpp"
#include "sde/euler.hpp"
#include "sde/ldp.hpp"
#include "sde/pathprops.hpp"
#include "sde/rng.hpp"
#include "sde/skeleton.hpp"
#include "sde/util.hpp"

namespace sde::experiment {

namespace {

using nlohmann::json;

// ---- config access with resolved-value echo ------------------------------

struct Cfg {
  const json& in;
  json resolved = json::object();

  explicit Cfg(const json& j) : in(j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
  }

  bool has(const char* f) const { return in.contains(f); }

  const json& raw(const char* f) const {
    if (!in.contains(f))
      throw ConfigError(std::string("missing required field: ") + f);
    return in.at(f);
  }

  double num(const char* f) {
    const json& v = raw(f);
    if (!v.is_number())
      throw ConfigError(std::string("field must be a number: ") + f);
    const double d = v.get<double>();
    resolved[f] = d;
    return d;
  }

  double num_or(const char* f, double dflt) {
    if (!has(f)) {
      resolved[f] = dflt;
      return dflt;
    }
    return num(f);
  }

  std::int64_t integer(const char* f) {
    const json& v = raw(f);
    if (!v.is_number())
      throw ConfigError(std::string("field must be an integer: ") + f);
    const double d = v.get<double>();
    if (d != std::nearbyint(d) || std::fabs(d) > 9.0e15)
      throw ConfigError(std::string("field must be an integer: ") + f);
    resolved[f] = static_cast<std::int64_t>(d);
    return static_cast<std::int64_t>(d);
  }

  std::int64_t integer_or(const char* f, std::int64_t dflt) {
    if (!has(f)) {
      resolved[f] = dflt;
      return dflt;
    }
    return integer(f);
  }

  std::string str(const char* f) {
    const json& v = raw(f);
    if (!v.is_string())
      throw ConfigError(std::string("field must be a string: ") + f);
    resolved[f] = v;
    return v.get<std::string>();
  }

  std::string str_or(const char* f, const std::string& dflt) {
    if (!has(f)) {
      resolved[f] = dflt;
      return dflt;
    }
    return str(f);
  }

  std::vector<double> num_list(const char* f) {
    const json& v = raw(f);
    if (!v.is_array() || v.empty())
      throw ConfigError(std::string("field must be a non-empty array: ") + f);
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number())
        throw ConfigError(std::string("array must hold numbers: ") + f);
      out.push_back(e.get<double>());
    }
    resolved[f] = out;
    return out;
  }

  std::vector<double> num_list_or(const char* f,
                                  const std::vector<double>& dflt) {
    if (!has(f)) {
      resolved[f] = dflt;
      return dflt;
    }
    return num_list(f);
  }

  std::vector<int> int_list(const char* f) {
    std::vector<int> out;
    for (double d : num_list(f)) {
      if (d != std::nearbyint(d) || std::fabs(d) > 1e9)
        throw ConfigError(std::string("array must hold integers: ") + f);
      out.push_back(static_cast<int>(d));
    }
    return out;
  }
};

// ---- model construction ---------------------------------------------------

std::vector<double> poly_from_json(const json& v, const char* what) {
  if (!v.is_array())
    throw ConfigError(std::string("custom coefficients must be arrays: ") +
                      what);
  std::vector<double> c;
  for (const auto& e : v) {
    if (!e.is_number())
      throw ConfigError(std::string("custom coefficients must be numbers: ") +
                        what);
    c.push_back(e.get<double>());
  }
  return c;
}

coefficients::Model model_from_json(const json& j) {
  if (j.is_string()) return coefficients::parse(j.get<std::string>());
  if (!j.is_object())
    throw ConfigError("field model must be a spec string or an object");
  coefficients::Model m;
  if (j.contains("custom")) {
    const json& c = j.at("custom");
    if (!c.is_object() || !c.contains("b") || !c.contains("s"))
      throw ConfigError("model.custom needs coefficient arrays b and s");
    m = coefficients::custom_poly(poly_from_json(c.at("b"), "model.custom.b"),
                                  poly_from_json(c.at("s"), "model.custom.s"));
  } else if (j.contains("spec")) {
    if (!j.at("spec").is_string())
      throw ConfigError("field model.spec must be a string");
    m = coefficients::parse(j.at("spec").get<std::string>());
  } else {
    throw ConfigError("field model needs either spec or custom");
  }
  if (j.contains("drift_offset")) {
    if (!j.at("drift_offset").is_number())
      throw ConfigError("field model.drift_offset must be a number");
    m = coefficients::with_drift_offset(m, j.at("drift_offset").get<double>());
  }
  if (j.contains("truncate")) {
    const json& t = j.at("truncate");
    if (!t.is_object() || !t.contains("radius") ||
        !t.at("radius").is_number())
      throw ConfigError("field model.truncate needs a numeric radius");
    coefficients::TruncationSpec spec;
    spec.radius = t.at("radius").get<double>();
    if (!(spec.radius > 0.0))
      throw ConfigError("field model.truncate.radius must be > 0");
    const std::string mode =
        t.contains("mode") ? t.at("mode").get<std::string>() : "clamp";
    if (mode == "clamp")
      spec.mode = coefficients::TruncMode::clamp;
    else if (mode == "cutoff")
      spec.mode = coefficients::TruncMode::cutoff;
    else
      throw ConfigError("field model.truncate.mode must be clamp or cutoff");
    m = coefficients::truncate(m, spec);
  }
  if (j.contains("dim")) {
    if (!j.at("dim").is_number())
      throw ConfigError("field model.dim must be an integer");
    m = coefficients::diagonal(m, j.at("dim").get<int>());
  }
  return m;
}

// ---- CSV plumbing ----------------------------------------------------------

struct RunCtx {
  std::string out_dir;
  std::string kind;
  std::string model_name = "-";
  std::string n_str = "-", t_str = "-", m_str = "-";
  std::uint64_t seed = 0;
  int workers = 1;
  RunResult* result = nullptr;

  std::string provenance() const {
    return "# model=" + model_name + " n=" + n_str + " T=" + t_str +
           " M=" + m_str + " seed=" + std::to_string(seed) +
           " build=" + std::string(build_id());
  }

  void write_csv(const std::string& file, const std::string& columns,
                 const std::string& rows) const {
    const std::filesystem::path p = std::filesystem::path(out_dir) / file;
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot open artifact for writing: " + p.string());
    os << provenance() << "\n"
       << "# generated=" << iso_utc_now() << "\n"
       << columns << "\n"
       << rows;
    if (!os) throw IoError("failed writing artifact: " + p.string());
    result->artifacts.push_back(p.string());
  }
};

std::string g17(double v) { return fmt_g17(v); }

void put(std::map<std::string, double>& m, const std::string& k, double v) {
  m[k] = v;
}

// grid time k*2^-n without accumulation error
double grid_t(std::int64_t k, int level) {
  return std::ldexp(static_cast<double>(k), -level);
}

std::string ldp_rows_csv(const std::vector<ldp::LdpRow>& rows) {
  std::ostringstream os;
  for (const auto& r : rows)
    os << g17(r.eps) << ',' << r.M << ',' << r.hits << ',' << g17(r.phat)
       << ',' << g17(r.lo95) << ',' << g17(r.hi95) << ','
       << g17(r.eps_log_phat) << "\n";
  return os.str();
}

void ldp_metrics(std::map<std::string, double>& met,
                 const std::vector<ldp::LdpRow>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string sfx = "_" + std::to_string(i);
    put(met, "phat" + sfx, rows[i].phat);
    put(met, "hits" + sfx, static_cast<double>(rows[i].hits));
    put(met, "lo95" + sfx, rows[i].lo95);
    put(met, "hi95" + sfx, rows[i].hi95);
    put(met, "eps_log_phat" + sfx, rows[i].eps_log_phat);
  }
}

void fit_and_emit(const std::vector<ldp::LdpRow>& rows, const RunCtx& ctx,
                  std::map<std::string, double>& met) {
  int nonzero = 0;
  for (const auto& r : rows) nonzero += r.hits > 0 ? 1 : 0;
  if (nonzero < 2) {
    put(met, "fit_ok", 0.0);
    return;
  }
  const ldp::SlopeFit fit = ldp::fit_rate(rows);
  put(met, "fit_ok", 1.0);
  put(met, "I_hat", fit.I_hat);
  put(met, "I_stderr", fit.stderr_);
  put(met, "fit_rows", static_cast<double>(fit.rows));
  std::ostringstream os;
  os << g17(fit.I_hat) << ',' << g17(fit.stderr_) << ',' << fit.rows << "\n";
  ctx.write_csv("slope.csv", "I_hat,stderr,rows", os.str());
}

std::vector<double> phi_from_cfg(Cfg& cfg, double x0, std::int64_t K) {
  if (cfg.has("phi")) {
    const std::vector<double> phi = cfg.num_list("phi");
    if (static_cast<std::int64_t>(phi.size()) != K + 1)
      throw ConfigError("field phi needs " + std::to_string(K + 1) +
                        " values (level grid)");
    return phi;
  }
  const double y = cfg.num("phi_line_to");
  std::vector<double> phi(static_cast<std::size_t>(K) + 1);
  for (std::int64_t k = 0; k <= K; ++k)
    phi[static_cast<std::size_t>(k)] =
        x0 + (y - x0) * (static_cast<double>(k) / static_cast<double>(K));
  phi[0] = x0;
  return phi;
}

skeleton::MinimizeOptions opts_from_cfg(Cfg& cfg, const rng::Stream& s) {
  skeleton::MinimizeOptions o;
  o.tol = cfg.num_or("tol", o.tol);
  o.w0 = cfg.num_or("w0", o.w0);
  o.w_factor = cfg.num_or("w_factor", o.w_factor);
  o.max_outer = static_cast<int>(cfg.integer_or("max_outer", o.max_outer));
  o.max_inner = static_cast<int>(cfg.integer_or("max_inner", o.max_inner));
  o.gtol = cfg.num_or("gtol", o.gtol);
  o.lbfgs_memory =
      static_cast<int>(cfg.integer_or("lbfgs_memory", o.lbfgs_memory));
  o.check_stream = rng::substream(s, 0x67726164);  // gradient-check lane
  return o;
}

void rate_artifacts(const skeleton::RateEstimate& est, const RunCtx& ctx,
                    std::map<std::string, double>& met) {
  {
    std::ostringstream os;
    os << g17(est.value) << ',' << g17(est.residual) << ','
       << (est.converged ? 1 : 0) << ',' << est.outer_rounds << ','
       << est.inner_iters << "\n";
    ctx.write_csv("rate.csv", "value,residual,converged,outer_rounds,inner_iters",
                  os.str());
  }
  {
    std::ostringstream os;
    for (std::int64_t k = 0; k < est.control.cells(); ++k)
      os << k << ',' << g17(grid_t(k, est.control.level)) << ','
         << g17(est.control.hdot[static_cast<std::size_t>(k)]) << "\n";
    ctx.write_csv("control.csv", "k,t,hdot_1", os.str());
  }
  {
    std::ostringstream os;
    for (std::size_t k = 0; k < est.xpath.size(); ++k)
      os << k << ','
         << g17(grid_t(static_cast<std::int64_t>(k), est.control.level)) << ','
         << g17(est.xpath[k]) << "\n";
    ctx.write_csv("path.csv", "k,t,x", os.str());
  }
  put(met, "value", est.value);
  put(met, "residual", est.residual);
  put(met, "converged", est.converged ? 1.0 : 0.0);
  put(met, "outer_rounds", est.outer_rounds);
  put(met, "inner_iters", est.inner_iters);
  put(met, "grad_check_err", est.grad_check_err);
  put(met, "dir_deriv", est.dir_deriv);
}

// ---- kind handlers ---------------------------------------------------------

void run_simulate(Cfg& cfg, const coefficients::Model& model,
                  const rng::Stream& stream, RunCtx& ctx,
                  std::map<std::string, double>& met) {
  const double T = cfg.num("T");
  const int n = static_cast<int>(cfg.integer("n"));
  const std::int64_t M = cfg.integer_or("M", 1);
  const double eps = cfg.num_or("eps", 1.0);
  const double n_trunc = cfg.num_or("n_trunc", euler::kDefaultTrunc);
  if (M < 1) throw ConfigError("field M must be >= 1");
  std::vector<double> x0(static_cast<std::size_t>(model.d), 0.0);
  if (cfg.raw("x0").is_array()) {
    const auto v = cfg.num_list("x0");
    if (static_cast<int>(v.size()) != model.d)
      throw ConfigError("field x0 must have one value per state dimension");
    x0 = v;
  } else {
    std::fill(x0.begin(), x0.end(), cfg.num("x0"));
  }
  ctx.n_str = std::to_string(n);
  ctx.t_str = g17(T);
  ctx.m_str = std::to_string(M);

  double max_dev = 0.0;
  std::int64_t exited = 0, invalid = 0;
  brownian::DyadicPath path;
  euler::Trajectory traj, first;
  for (std::int64_t i = 0; i < M; ++i) {
    brownian::sample_path_into(rng::substream(stream, static_cast<std::uint64_t>(i)),
                               T, n, model.m, path);
    euler::simulate_into(model, path, n, x0.data(), eps, n_trunc, traj);
    if (i == 0) first = traj;
    if (traj.invalid) {
      ++invalid;
      continue;
    }
    if (traj.exited()) ++exited;
    for (std::int64_t k = 0; k <= traj.steps(); ++k)
      for (int c = 0; c < model.d; ++c)
        max_dev = std::max(
            max_dev,
            std::fabs(traj.value(k, c) - x0[static_cast<std::size_t>(c)]));
  }
  if (M >= 1 && invalid == M)
    throw NumericalError("all trajectories were non-finite");

  std::ostringstream os;
  std::string cols = "k,t";
  for (int c = 1; c <= model.d; ++c) cols += ",x_" + std::to_string(c);
  cols += ",exited";
  for (std::int64_t k = 0; k <= first.steps(); ++k) {
    os << k << ',' << g17(grid_t(k, n));
    for (int c = 0; c < model.d; ++c) os << ',' << g17(first.value(k, c));
    os << ',' << (first.exited() && k >= first.exit_index ? 1 : 0) << "\n";
  }
  ctx.write_csv("trajectory.csv", cols, os.str());

  put(met, "max_deviation", max_dev);
  put(met, "exited_count", static_cast<double>(exited));
  put(met, "invalid_count", static_cast<double>(invalid));
  put(met, "x_T", first.value(first.steps(), 0));
}

void run_converge(Cfg& cfg, const coefficients::Model& model,
                  const rng::Stream& stream, RunCtx& ctx,
                  std::map<std::string, double>& met) {
  const double x0 = cfg.num("x0");
  const double T = cfg.num("T");
  const int n_min = static_cast<int>(cfg.integer("n_min"));
  const int n_max = static_cast<int>(cfg.integer("n_max"));
  const int n_ref = static_cast<int>(cfg.integer("n_ref"));
  const std::int64_t M = cfg.integer("M");
  const double eps = cfg.num_or("eps", 1.0);
  const double n_trunc = cfg.num_or("n_trunc", euler::kDefaultTrunc);
  ctx.n_str = std::to_string(n_min) + ".." + std::to_string(n_max);
  ctx.t_str = g17(T);
  ctx.m_str = std::to_string(M);
  const auto rows = euler::strong_error_study(model, x0, T, n_min, n_max,
                                              n_ref, M, eps, n_trunc, stream,
                                              ctx.workers);
  std::ostringstream os;
  for (const auto& r : rows)
    os << r.n << ',' << r.M << ',' << r.excluded << ',' << g17(r.est) << ','
       << g17(r.stderr_) << "\n";
  ctx.write_csv("strong_error.csv", "n,M,excluded,est,stderr", os.str());

  bool strict = true;
  for (std::size_t i = 1; i < rows.size(); ++i)
    strict = strict && rows[i].est < rows[i - 1].est;
  const auto& a = rows.front();
  const auto& b = rows.back();
  for (const auto& r : rows) {
    const std::string sfx = "_" + std::to_string(r.n);
    put(met, "est" + sfx, r.est);
    put(met, "stderr" + sfx, r.stderr_);
    put(met, "excluded" + sfx, static_cast<double>(r.excluded));
  }
  put(met, "strictly_decreasing", strict ? 1.0 : 0.0);
  put(met, "ci_gap_first_last",
      (a.est - 1.96 * a.stderr_) - (b.est + 1.96 * b.stderr_));
}

void run_envelope(Cfg& cfg, const coefficients::Model& model,
                  const rng::Stream& stream, RunCtx& ctx,
                  std::map<std::string, double>& met) {
  const double C = cfg.num("C");
  const double mu = cfg.num("mu");
  const std::vector<double> N_grid =
      cfg.num_list_or("N_grid", {3, 10, 100, 1000, 10000});
  const std::int64_t samples = cfg.integer_or("samples", 100000);
  ctx.m_str = std::to_string(samples);
  const auto rep =
      coefficients::verify_envelope(model, C, mu, N_grid, samples, stream);
  std::ostringstream os;
  for (std::size_t i = 0; i < rep.N_grid.size(); ++i) {
    os << g17(rep.N_grid[i]) << ',' << g17(C) << ',' << g17(mu) << ",drift,"
       << rep.drift[i].violations << ',' << g17(rep.drift[i].worst_lhs) << ','
       << g17(rep.drift[i].worst_rhs) << "\n";
    os << g17(rep.N_grid[i]) << ',' << g17(C) << ',' << g17(mu)
       << ",diffusion," << rep.diff[i].violations << ','
       << g17(rep.diff[i].worst_lhs) << ',' << g17(rep.diff[i].worst_rhs)
       << "\n";
  }
  ctx.write_csv("envelope.csv", "N,C,mu,line,violations,worst_lhs,worst_rhs",
                os.str());
  put(met, "drift_violations", static_cast<double>(rep.drift_violations()));
  put(met, "diff_violations", static_cast<double>(rep.diff_violations()));
  put(met, "C_est", rep.C_est);
  put(met, "mu_est", rep.mu_est);
}

void run_growth(Cfg& cfg, const coefficients::Model& model,
                const rng::Stream& stream, RunCtx& ctx,
                std::map<std::string, double>& met) {
  const double K = cfg.num_or("K", 10.0);
  const std::int64_t samples = cfg.integer_or("samples", 100000);
  ctx.m_str = std::to_string(samples);
  const auto rep = coefficients::verify_growth(model, K, samples, stream);
  std::ostringstream os;
  os << g17(K) << ',' << (rep.holds ? 1 : 0) << ',' << g17(rep.C_fit) << ','
     << g17(rep.C_low) << ',' << g17(rep.C_high) << ',' << g17(rep.worst_x)
     << "\n";
  ctx.write_csv("growth.csv", "K,holds,C_fit,C_low,C_high,worst_x", os.str());
  put(met, "holds", rep.holds ? 1.0 : 0.0);
  put(met, "C_fit", rep.C_fit);
  put(met, "C_low", rep.C_low);
  put(met, "C_high", rep.C_high);
}

void run_driftgap(Cfg& cfg, const coefficients::Model& model, RunCtx& ctx,
                  std::map<std::string, double>& met) {
  const std::vector<double> grid =
      cfg.num_list_or("x_grid", {10, 100, 1000, 10000, 100000, 1000000});
  const auto rows = coefficients::unit_gap_probe(model, grid);
  std::ostringstream os;
  for (const auto& r : rows) os << g17(r.x) << ',' << g17(r.g) << "\n";
  ctx.write_csv("driftgap.csv", "x,g", os.str());
  put(met, "g_first", rows.front().g);
  put(met, "g_last", rows.back().g);
  put(met, "g_ratio",
      rows.front().g != 0.0 ? rows.back().g / rows.front().g
                            : std::numeric_limits<double>::infinity());
}

void run_continuity(Cfg& cfg, const coefficients::Model& model,
                    const rng::Stream& stream, RunCtx& ctx,
                    std::map<std::string, double>& met) {
  const double x0 = cfg.num("x0");
  const auto deltas = cfg.num_list("deltas");
  const double T = cfg.num("T");
  const int n = static_cast<int>(cfg.integer("n"));
  const std::int64_t M = cfg.integer("M");
  const double eps = cfg.num_or("eps", 1.0);
  const double n_trunc = cfg.num_or("n_trunc", euler::kDefaultTrunc);
  ctx.n_str = std::to_string(n);
  ctx.t_str = g17(T);
  ctx.m_str = std::to_string(M);
  const auto rows = pathprops::continuity_study(model, x0, deltas, T, n, M,
                                                eps, n_trunc, stream,
                                                ctx.workers);
  std::ostringstream os;
  for (const auto& r : rows)
    os << g17(r.delta) << ',' << g17(r.est) << ',' << g17(r.stderr_) << ','
       << r.excluded << "\n";
  ctx.write_csv("continuity.csv", "delta,est,stderr,excluded", os.str());
  bool decreasing = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string sfx = "_" + std::to_string(i);
    put(met, "est" + sfx, rows[i].est);
    put(met, "stderr" + sfx, rows[i].stderr_);
    if (i > 0) decreasing = decreasing && rows[i].est <= rows[i - 1].est;
  }
  put(met, "decreasing", decreasing ? 1.0 : 0.0);
}

void run_confluence(Cfg& cfg, const coefficients::Model& model,
                    const rng::Stream& stream, RunCtx& ctx,
                    std::map<std::string, double>& met) {
  const double x = cfg.num("x");
  const double y = cfg.num("y");
  const double T = cfg.num("T");
  const int n = static_cast<int>(cfg.integer("n"));
  const std::int64_t M = cfg.integer("M");
  const double tau = cfg.num("tau");
  const double eps = cfg.num_or("eps", 1.0);
  const double n_trunc = cfg.num_or("n_trunc", euler::kDefaultTrunc);
  ctx.n_str = std::to_string(n);
  ctx.t_str = g17(T);
  ctx.m_str = std::to_string(M);
  const auto g = pathprops::confluence_study(model, x, y, T, n, M, tau, eps,
                                             n_trunc, stream, ctx.workers);
  std::ostringstream os;
  os << g.M << ',' << g17(g.tau) << ',' << g17(g.fraction_below_tau) << ','
     << g.sign_flips << ',' << g17(g.global_min_gap) << ',' << g.excluded
     << "\n";
  ctx.write_csv("confluence.csv",
                "M,tau,fraction_below_tau,sign_flips,global_min_gap,excluded",
                os.str());
  put(met, "fraction_below_tau", g.fraction_below_tau);
  put(met, "sign_flips", static_cast<double>(g.sign_flips));
  put(met, "global_min_gap", g.global_min_gap);
  put(met, "excluded", static_cast<double>(g.excluded));
}

void run_compare(Cfg& cfg, const coefficients::Model& model,
                 const rng::Stream& stream, RunCtx& ctx,
                 std::map<std::string, double>& met) {
  const double offset = cfg.num("drift_offset");
  if (!(offset >= 0.0))
    throw ConfigError("field drift_offset must be >= 0 (b2 = b1 + offset)");
  const double x1 = cfg.num("x1_0");
  const double x2 = cfg.num("x2_0");
  const double T = cfg.num("T");
  const int n = static_cast<int>(cfg.integer("n"));
  const std::int64_t M = cfg.integer("M");
  const double eps = cfg.num_or("eps", 1.0);
  const double n_trunc = cfg.num_or("n_trunc", euler::kDefaultTrunc);
  ctx.n_str = std::to_string(n);
  ctx.t_str = g17(T);
  ctx.m_str = std::to_string(M);
  const auto m2 = coefficients::with_drift_offset(model, offset);
  const auto res = pathprops::comparison_study(model, m2, x1, x2, T, n, M,
                                               eps, n_trunc, stream,
                                               ctx.workers);
  std::ostringstream os;
  os << res.M << ',' << res.checked << ',' << res.violations << ','
     << g17(res.violation_fraction) << ',' << res.excluded << "\n";
  ctx.write_csv("compare.csv", "M,checked,violations,violation_fraction,excluded",
                os.str());
  put(met, "violation_fraction", res.violation_fraction);
  put(met, "violations", static_cast<double>(res.violations));
  put(met, "checked", static_cast<double>(res.checked));
  put(met, "excluded", static_cast<double>(res.excluded));
}

void run_flow(Cfg& cfg, const coefficients::Model& model,
              const rng::Stream& stream, RunCtx& ctx,
              std::map<std::string, double>& met) {
  const auto grid = cfg.num_list("grid");
  const double t = cfg.num("t");
  const int n = static_cast<int>(cfg.integer("n"));
  const std::int64_t M = cfg.integer("M");
  const double eps = cfg.num_or("eps", 1.0);
  const double n_trunc = cfg.num_or("n_trunc", euler::kDefaultTrunc);
  ctx.n_str = std::to_string(n);
  ctx.t_str = g17(t);
  ctx.m_str = std::to_string(M);
  const auto snap = pathprops::flow_snapshot(model, grid, t, n, M, eps,
                                             n_trunc, stream, ctx.workers);
  std::ostringstream os;
  for (std::size_t j = 0; j < snap.grid.size(); ++j)
    os << g17(snap.grid[j]) << ',' << g17(snap.mean_terminal[j]) << ','
       << g17(snap.min_terminal[j]) << ',' << g17(snap.max_terminal[j])
       << "\n";
  ctx.write_csv("flow.csv", "x0,mean_terminal,min_terminal,max_terminal",
                os.str());
  put(met, "violation_fraction", snap.violation_fraction);
  put(met, "violations", static_cast<double>(snap.violations));
  put(met, "adjacent_pairs", static_cast<double>(snap.adjacent_pairs));
  put(met, "excluded", static_cast<double>(snap.excluded));
}

void run_moments(Cfg& cfg, const coefficients::Model& model,
                 const rng::Stream& stream, RunCtx& ctx,
                 std::map<std::string, double>& met) {
  const json& pj = cfg.raw("pairs");
  if (!pj.is_array() || pj.empty())
    throw ConfigError("field pairs must be a non-empty array of {x,s,y,t}");
  std::vector<pathprops::MomentPair> pairs;
  for (const auto& e : pj) {
    if (!e.is_object() || !e.contains("x") || !e.contains("s") ||
        !e.contains("y") || !e.contains("t"))
      throw ConfigError("field pairs entries need numeric x, s, y, t");
    pathprops::MomentPair p;
    p.x = e.at("x").get<double>();
    p.s = e.at("s").get<double>();
    p.y = e.at("y").get<double>();
    p.t = e.at("t").get<double>();
    pairs.push_back(p);
  }
  cfg.resolved["pairs"] = pj;
  const double p = cfg.num("p");
  const int n = static_cast<int>(cfg.integer("n"));
  const std::int64_t M = cfg.integer("M");
  const double eps = cfg.num_or("eps", 1.0);
  const double n_trunc = cfg.num_or("n_trunc", euler::kDefaultTrunc);
  ctx.n_str = std::to_string(n);
  ctx.m_str = std::to_string(M);
  const auto rep = pathprops::moment_modulus_study(model, pairs, p, n, M, eps,
                                                   n_trunc, stream,
                                                   ctx.workers);
  std::ostringstream os;
  for (const auto& r : rep.rows)
    os << g17(r.pair.x) << ',' << g17(r.pair.s) << ',' << g17(r.pair.y) << ','
       << g17(r.pair.t) << ',' << g17(r.moment) << ',' << g17(r.stderr_)
       << ',' << g17(r.envelope) << ',' << g17(r.ratio) << ',' << r.excluded
       << "\n";
  ctx.write_csv("moments.csv", "x,s,y,t,moment,stderr,envelope,ratio,excluded",
                os.str());
  put(met, "c_fit", rep.c_fit);
  put(met, "c_fit_hi95", rep.c_fit_hi95);
}

skeleton::Control control_from_cfg(Cfg& cfg) {
  const json& cj = cfg.raw("control");
  if (!cj.is_object())
    throw ConfigError("field control must be an object {level, T, hdot|value}");
  skeleton::Control c;
  if (!cj.contains("level") || !cj.at("level").is_number())
    throw ConfigError("field control.level must be an integer");
  c.level = cj.at("level").get<int>();
  if (!cj.contains("T") || !cj.at("T").is_number())
    throw ConfigError("field control.T must be a number");
  c.T = cj.at("T").get<double>();
  std::int64_t cells = 0;
  if (!dyadic_steps(c.T, c.level, &cells))
    throw ConfigError(
        "field control.T must be a positive integer multiple of 2^-level");
  if (cj.contains("hdot")) {
    c.hdot = poly_from_json(cj.at("hdot"), "control.hdot");
  } else if (cj.contains("value")) {
    if (!cj.at("value").is_number())
      throw ConfigError("field control.value must be a number");
    c.hdot.assign(static_cast<std::size_t>(cells),
                  cj.at("value").get<double>());
  } else if (cj.contains("ramp_to")) {
    // hdot rises linearly from 0 to ramp_to across the cells
    if (!cj.at("ramp_to").is_number())
      throw ConfigError("field control.ramp_to must be a number");
    const double top = cj.at("ramp_to").get<double>();
    c.hdot.resize(static_cast<std::size_t>(cells));
    for (std::int64_t k = 0; k < cells; ++k)
      c.hdot[static_cast<std::size_t>(k)] =
          top * (static_cast<double>(k) + 0.5) / static_cast<double>(cells);
  } else {
    throw ConfigError("field control needs hdot, value, or ramp_to");
  }
  cfg.resolved["control"] = cj;
  return c;
}

void run_skeleton(Cfg& cfg, const coefficients::Model& model, RunCtx& ctx,
                  std::map<std::string, double>& met) {
  const double x0 = cfg.num("x0");
  const skeleton::Control c = control_from_cfg(cfg);
  const std::string integ = cfg.str_or("integrator", "rk4");
  if (integ != "euler" && integ != "rk4")
    throw ConfigError("field integrator must be euler or rk4");
  const int level_out =
      static_cast<int>(cfg.integer_or("level_out", c.level));
  ctx.n_str = std::to_string(level_out);
  ctx.t_str = g17(c.T);
  const auto tr = skeleton::solve_skeleton(
      model, x0, c,
      integ == "euler" ? skeleton::OdeMethod::euler : skeleton::OdeMethod::rk4,
      level_out);
  std::ostringstream os;
  for (std::size_t k = 0; k < tr.values.size(); ++k)
    os << k << ',' << g17(grid_t(static_cast<std::int64_t>(k), level_out))
       << ',' << g17(tr.values[k]) << "\n";
  ctx.write_csv("skeleton.csv", "k,t,x", os.str());
  put(met, "x_T", tr.values.back());
  put(met, "invalid", tr.invalid ? 1.0 : 0.0);
  put(met, "energy", skeleton::energy(c));

  if (cfg.has("n_grid")) {
    const auto n_grid = cfg.int_list("n_grid");
    const auto rep = skeleton::skeleton_consistency(model, x0, c, n_grid);
    std::ostringstream cs;
    for (const auto& r : rep.rows)
      cs << r.n << ',' << g17(r.gap) << "\n";
    ctx.write_csv("consistency.csv", "n,gap", cs.str());
    put(met, "slope", rep.slope);
    bool strict = true;
    for (std::size_t i = 1; i < rep.rows.size(); ++i)
      strict = strict && rep.rows[i].gap < rep.rows[i - 1].gap;
    put(met, "gaps_strictly_decreasing", strict ? 1.0 : 0.0);
    for (const auto& r : rep.rows)
      put(met, "gap_" + std::to_string(r.n), r.gap);
  }
}

void run_rate(Cfg& cfg, const coefficients::Model& model,
              const rng::Stream& stream, RunCtx& ctx,
              std::map<std::string, double>& met) {
  const double x0 = cfg.num("x0");
  const double y = cfg.num("y");
  const double T = cfg.num("T");
  const int level = static_cast<int>(cfg.integer("level"));
  const auto opts = opts_from_cfg(cfg, stream);
  ctx.n_str = std::to_string(level);
  ctx.t_str = g17(T);
  const auto est = skeleton::minimize_rate_endpoint(model, x0, y, T, level, opts);
  rate_artifacts(est, ctx, met);
}

void run_tube(Cfg& cfg, const coefficients::Model& model,
              const rng::Stream& stream, RunCtx& ctx,
              std::map<std::string, double>& met) {
  const double x0 = cfg.num("x0");
  const double T = cfg.num("T");
  const int level = static_cast<int>(cfg.integer("level"));
  const double delta = cfg.num("delta");
  std::int64_t K = 0;
  if (!dyadic_steps(T, level, &K))
    throw ConfigError("field T must be a positive integer multiple of 2^-level");
  const auto phi = phi_from_cfg(cfg, x0, K);
  const auto opts = opts_from_cfg(cfg, stream);
  ctx.n_str = std::to_string(level);
  ctx.t_str = g17(T);
  const auto est =
      skeleton::minimize_rate_tube(model, x0, phi, delta, T, level, opts);
  rate_artifacts(est, ctx, met);
}

void run_ldp_exit(Cfg& cfg, const coefficients::Model& model,
                  const rng::Stream& stream, RunCtx& ctx,
                  std::map<std::string, double>& met) {
  const double x0 = cfg.num("x0");
  const double R_dom = cfg.num("R_dom");
  const double T = cfg.num("T");
  const int level = static_cast<int>(cfg.integer("level"));
  const auto eps_list = cfg.num_list_or("eps_list", {0.25, 0.125, 1.0 / 12.0, 0.0625});
  const std::int64_t M = cfg.integer("M");
  const double n_trunc = cfg.num_or("n_trunc", euler::kDefaultTrunc);
  ctx.n_str = std::to_string(level);
  ctx.t_str = g17(T);
  ctx.m_str = std::to_string(M);
  const auto rows = ldp::exit_probability_study(model, x0, R_dom, T, level,
                                                eps_list, M, n_trunc, stream,
                                                ctx.workers);
  ctx.write_csv("ldp_exit.csv", "epsilon,M,hits,phat,lo95,hi95,eps_log_phat",
                ldp_rows_csv(rows));
  ldp_metrics(met, rows);
  fit_and_emit(rows, ctx, met);
}

void run_ldp_tube(Cfg& cfg, const coefficients::Model& model,
                  const rng::Stream& stream, RunCtx& ctx,
                  std::map<std::string, double>& met) {
  const double x0 = cfg.num("x0");
  const double delta = cfg.num("delta");
  const double T = cfg.num("T");
  const int level = static_cast<int>(cfg.integer("level"));
  const auto eps_list = cfg.num_list_or("eps_list", {0.25, 0.125, 1.0 / 12.0, 0.0625});
  const std::int64_t M = cfg.integer("M");
  const double n_trunc = cfg.num_or("n_trunc", euler::kDefaultTrunc);
  std::int64_t K = 0;
  if (!dyadic_steps(T, level, &K))
    throw ConfigError("field T must be a positive integer multiple of 2^-level");
  const auto phi = phi_from_cfg(cfg, x0, K);
  ctx.n_str = std::to_string(level);
  ctx.t_str = g17(T);
  ctx.m_str = std::to_string(M);
  const auto rows = ldp::tube_probability_study(model, x0, phi, delta, T,
                                                level, eps_list, M, n_trunc,
                                                stream, ctx.workers);
  ctx.write_csv("ldp_tube.csv", "epsilon,M,hits,phat,lo95,hi95,eps_log_phat",
                ldp_rows_csv(rows));
  ldp_metrics(met, rows);
  fit_and_emit(rows, ctx, met);
}

void run_ldp_euler(Cfg& cfg, const coefficients::Model& model,
                   const rng::Stream& stream, RunCtx& ctx,
                   std::map<std::string, double>& met) {
  const double x0 = cfg.num("x0");
  const double delta = cfg.num("delta");
  const auto eps_list = cfg.num_list("eps_list");
  const auto n_list = cfg.int_list("n_list");
  const double T = cfg.num("T");
  const std::int64_t M = cfg.integer("M");
  const double n_trunc = cfg.num_or("n_trunc", euler::kDefaultTrunc);
  {
    std::string ns;
    for (std::size_t i = 0; i < n_list.size(); ++i)
      ns += (i ? "," : "") + std::to_string(n_list[i]);
    ctx.n_str = ns;
  }
  ctx.t_str = g17(T);
  ctx.m_str = std::to_string(M);
  const auto rows = ldp::euler_gap_probe(model, x0, delta, eps_list, n_list,
                                         T, M, n_trunc, stream, ctx.workers);
  std::ostringstream os;
  for (const auto& r : rows)
    os << g17(r.eps) << ',' << r.n << ',' << r.n_ref << ',' << r.M << ','
       << r.hits << ',' << g17(r.phat) << ',' << g17(r.lo95) << ','
       << g17(r.hi95) << "\n";
  ctx.write_csv("ldp_euler.csv", "epsilon,n,n_ref,M,hits,phat,lo95,hi95",
                os.str());
  const std::size_t NL = n_list.size();
  bool mono = true;
  double min_ci_gap = std::numeric_limits<double>::infinity();
  for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
    for (std::size_t ni = 0; ni + 1 < NL; ++ni)
      mono = mono &&
             rows[ei * NL + ni + 1].phat <= rows[ei * NL + ni].phat;
    if (NL >= 2)
      min_ci_gap = std::min(min_ci_gap, rows[ei * NL].lo95 -
                                            rows[ei * NL + NL - 1].hi95);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string sfx = "_" + std::to_string(i);
    put(met, "phat" + sfx, rows[i].phat);
    put(met, "hits" + sfx, static_cast<double>(rows[i].hits));
    put(met, "lo95" + sfx, rows[i].lo95);
    put(met, "hi95" + sfx, rows[i].hi95);
  }
  put(met, "monotone_nonincreasing", mono ? 1.0 : 0.0);
  if (NL >= 2) put(met, "min_ci_gap_first_last", min_ci_gap);
}

// ---- driver ----------------------------------------------------------------

RunResult run_config_json(const json& root, const std::string& out_override,
                          long long seed_override, int workers_override) {
  Cfg cfg(root);
  const std::string kind = cfg.str("kind");
  static const std::set<std::string> kKinds = {
      "simulate", "converge",   "envelope", "growth",   "driftgap",
      "continuity", "confluence", "compare",  "flow",     "moments",
      "skeleton", "rate",       "tube",     "ldp-exit", "ldp-tube",
      "ldp-euler"};
  if (!kKinds.count(kind))
    throw ConfigError(
        "unknown kind: " + kind +
        " (expected simulate|converge|envelope|growth|driftgap|continuity|"
        "confluence|compare|flow|moments|skeleton|rate|tube|ldp-exit|"
        "ldp-tube|ldp-euler)");

  std::int64_t seed;
  if (seed_override >= 0) {
    seed = seed_override;
    cfg.resolved["seed"] = seed;
  } else {
    seed = cfg.integer("seed");
    if (seed < 0) throw ConfigError("field seed must be a non-negative integer");
  }
  int workers;
  if (workers_override > 0) {
    workers = workers_override;
    cfg.resolved["workers"] = workers;
  } else {
    workers = static_cast<int>(cfg.integer_or("workers", 1));
    if (workers < 1) throw ConfigError("field workers must be >= 1");
  }
  std::string out =
      !out_override.empty() ? out_override : cfg.str_or("out", ".");
  if (!out_override.empty()) cfg.resolved["out"] = out;

  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory: " + out);

  RunResult result;
  RunCtx ctx;
  ctx.out_dir = out;
  ctx.kind = kind;
  ctx.seed = static_cast<std::uint64_t>(seed);
  ctx.workers = workers;
  ctx.result = &result;

  const rng::Stream stream = rng::make_stream(ctx.seed, 0);

  coefficients::Model model = model_from_json(cfg.raw("model"));
  cfg.resolved["model"] = cfg.raw("model");
  ctx.model_name = model.name;

  auto& met = result.metrics;
  if (kind == "simulate")
    run_simulate(cfg, model, stream, ctx, met);
  else if (kind == "converge")
    run_converge(cfg, model, stream, ctx, met);
  else if (kind == "envelope")
    run_envelope(cfg, model, stream, ctx, met);
  else if (kind == "growth")
    run_growth(cfg, model, stream, ctx, met);
  else if (kind == "driftgap")
    run_driftgap(cfg, model, ctx, met);
  else if (kind == "continuity")
    run_continuity(cfg, model, stream, ctx, met);
  else if (kind == "confluence")
    run_confluence(cfg, model, stream, ctx, met);
  else if (kind == "compare")
    run_compare(cfg, model, stream, ctx, met);
  else if (kind == "flow")
    run_flow(cfg, model, stream, ctx, met);
  else if (kind == "moments")
    run_moments(cfg, model, stream, ctx, met);
  else if (kind == "skeleton")
    run_skeleton(cfg, model, ctx, met);
  else if (kind == "rate")
    run_rate(cfg, model, stream, ctx, met);
  else if (kind == "tube")
    run_tube(cfg, model, stream, ctx, met);
  else if (kind == "ldp-exit")
    run_ldp_exit(cfg, model, stream, ctx, met);
  else if (kind == "ldp-tube")
    run_ldp_tube(cfg, model, stream, ctx, met);
  else
    run_ldp_euler(cfg, model, stream, ctx, met);

  json manifest;
  manifest["kind"] = kind;
  manifest["model"] = ctx.model_name;
  manifest["build"] = std::string(build_id());
  manifest["generated"] = iso_utc_now();
  manifest["seed"] = seed;
  manifest["workers"] = workers;
  manifest["out"] = out;
  manifest["config"] = cfg.resolved;
  manifest["artifacts"] = result.artifacts;
  manifest["metrics"] = result.metrics;
  result.manifest_json = manifest.dump(2) + "\n";
  const std::filesystem::path mp = std::filesystem::path(out) / "manifest.json";
  {
    std::ofstream os(mp, std::ios::binary);
    if (!os) throw IoError("cannot open manifest for writing: " + mp.string());
    os << result.manifest_json;
  }
  result.manifest_path = mp.string();
  return result;
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read file: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

RunResult run_config_text(const std::string& json_text,
                          const std::string& out_override,
                          long long seed_override, int workers_override) {
  return run_config_json(parse_json(json_text, "config JSON parse error"),
                         out_override, seed_override, workers_override);
}

RunResult run_config_file(const std::string& path,
                          const std::string& out_override,
                          long long seed_override, int workers_override) {
  return run_config_text(slurp(path), out_override, seed_override,
                         workers_override);
}

namespace {

bool eval_assertion(double actual, const std::string& op, double value,
                    double tol) {
  if (tol < 0.0) throw ConfigError("assertion tolerance must be >= 0");
  if (op == "<") return actual < value;
  if (op == "<=") return actual <= value;
  if (op == ">") return actual > value;
  if (op == ">=") return actual >= value;
  if (op == "==") return std::fabs(actual - value) <= tol;
  if (op == "!=") return std::fabs(actual - value) > tol;
  throw ConfigError("assertion op must be one of < <= > >= == !=");
}

}  // namespace

SuiteResult check_suite_text(const std::string& json_text,
                             const std::string& out_override,
                             long long seed_override, int workers_override) {
  const json root = parse_json(json_text, "suite JSON parse error");
  if (!root.is_object() || !root.contains("cases") ||
      !root.at("cases").is_array())
    throw ConfigError("suite needs a cases array");
  SuiteResult suite;
  suite.all_passed = true;
  std::ostringstream rep;
  int ci = 0;
  for (const auto& c : root.at("cases")) {
    ++ci;
    if (!c.is_object()) throw ConfigError("suite cases must be objects");
    const std::string name = c.contains("name")
                                 ? c.at("name").get<std::string>()
                                 : "case" + std::to_string(ci);
    json config;
    if (c.contains("config"))
      config = c.at("config");
    else if (c.contains("config_path"))
      config = parse_json(slurp(c.at("config_path").get<std::string>()),
                          "config JSON parse error");
    else
      throw ConfigError("suite case needs config or config_path: " + name);
    std::string case_out = out_override;
    if (!case_out.empty())
      case_out = (std::filesystem::path(out_override) / name).string();
    const RunResult run = run_config_json(config, case_out, seed_override,
                                          workers_override);
    ++suite.cases;
    if (!c.contains("assertions")) continue;
    if (!c.at("assertions").is_array())
      throw ConfigError("suite assertions must be an array: " + name);
    for (const auto& a : c.at("assertions")) {
      if (!a.is_object() || !a.contains("field") || !a.contains("op") ||
          !a.contains("value"))
        throw ConfigError("assertion needs field, op, value: " + name);
      const std::string field = a.at("field").get<std::string>();
      const std::string op = a.at("op").get<std::string>();
      const double value = a.at("value").get<double>();
      const double tol =
          a.contains("tol") ? a.at("tol").get<double>() : 0.0;
      if (tol < 0.0) throw ConfigError("assertion tolerance must be >= 0");
      ++suite.assertions;
      const auto it = run.metrics.find(field);
      bool pass = false;
      std::string actual = "missing";
      if (it != run.metrics.end()) {
        pass = eval_assertion(it->second, op, value, tol);
        actual = fmt_g17(it->second);
      }
      if (!pass) {
        ++suite.failures;
        suite.all_passed = false;
      }
      rep << (pass ? "[PASS] " : "[FAIL] ") << name << ": " << field << ' '
          << op << ' ' << fmt_g17(value);
      if (tol != 0.0) rep << " tol " << fmt_g17(tol);
      rep << " (actual " << actual << ")\n";
    }
  }
  suite.report = rep.str();
  return suite;
}

SuiteResult check_suite_file(const std::string& path,
                             const std::string& out_override,
                             long long seed_override, int workers_override) {
  return check_suite_text(slurp(path), out_override, seed_override,
                          workers_override);
}

}  // namespace sde::experiment
