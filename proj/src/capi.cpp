#include "sde/sde.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "sde/brownian.hpp"
#include "sde/coefficients.hpp"
#include "sde/euler.hpp"
#include "sde/experiment.hpp"
#include "sde/rng.hpp"
#include "sde/skeleton.hpp"
#include "sde/util.hpp"

struct sde_model {
  sde::coefficients::Model m;
};

struct sde_path {
  sde::brownian::DyadicPath p;
};

struct sde_trajectory {
  sde::euler::Trajectory t;
};

namespace {

thread_local std::string g_last_error;

sde_status to_status(const std::exception& e) {
  g_last_error = e.what();
  if (dynamic_cast<const sde::ConfigError*>(&e)) return SDE_ERR_CONFIG;
  if (dynamic_cast<const sde::NumericalError*>(&e)) return SDE_ERR_NUMERICAL;
  if (dynamic_cast<const sde::IoError*>(&e)) return SDE_ERR_IO;
  return SDE_ERR_INTERNAL;
}

template <class F>
sde_status guarded(F&& f) {
  try {
    f();
    return SDE_OK;
  } catch (const std::exception& e) {
    return to_status(e);
  } catch (...) {
    g_last_error = "unknown failure";
    return SDE_ERR_INTERNAL;
  }
}

sde_status need(bool ok, const char* msg) {
  if (ok) return SDE_OK;
  g_last_error = msg;
  return SDE_ERR_CONFIG;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* sde_version(void) { return "1.0.0"; }

const char* sde_build_id(void) { return sde::build_id(); }

const char* sde_last_error(void) { return g_last_error.c_str(); }

sde_status sde_model_create(const char* spec, sde_model** out) {
  if (const auto st = need(spec && out, "spec and out must be non-NULL"))
    return st;
  return guarded([&] { *out = new sde_model{sde::coefficients::parse(spec)}; });
}

sde_status sde_model_truncate(const sde_model* m, double radius,
                              const char* mode, sde_model** out) {
  if (const auto st = need(m && mode && out, "model, mode, out must be non-NULL"))
    return st;
  return guarded([&] {
    sde::coefficients::TruncationSpec spec;
    spec.radius = radius;
    const std::string ms = mode;
    if (ms == "clamp")
      spec.mode = sde::coefficients::TruncMode::clamp;
    else if (ms == "cutoff")
      spec.mode = sde::coefficients::TruncMode::cutoff;
    else
      throw sde::ConfigError("mode must be clamp or cutoff");
    *out = new sde_model{sde::coefficients::truncate(m->m, spec)};
  });
}

void sde_model_free(sde_model* m) { delete m; }

int sde_model_dim_state(const sde_model* m) { return m ? m->m.d : 0; }

int sde_model_dim_noise(const sde_model* m) { return m ? m->m.m : 0; }

sde_status sde_model_eval(const sde_model* m, const double* x,
                          double* drift_out, double* diffusion_out) {
  if (const auto st = need(m && x, "model and x must be non-NULL")) return st;
  return guarded([&] {
    const int d = m->m.d;
    for (int i = 0; i < d; ++i) {
      if (drift_out) drift_out[i] = m->m.b(x[i]);
      if (diffusion_out)
        for (int j = 0; j < m->m.m; ++j)
          diffusion_out[i * m->m.m + j] = i == j ? m->m.s(x[i]) : 0.0;
    }
  });
}

sde_status sde_path_sample(uint64_t master_seed, uint64_t stream_id, double T,
                           int level, int m, sde_path** out) {
  if (const auto st = need(out != nullptr, "out must be non-NULL")) return st;
  return guarded([&] {
    *out = new sde_path{sde::brownian::sample_path(
        sde::rng::make_stream(master_seed, stream_id), T, level, m)};
  });
}

sde_status sde_path_refine(sde_path* p) {
  if (const auto st = need(p != nullptr, "path must be non-NULL")) return st;
  return guarded([&] { sde::brownian::refine(p->p); });
}

void sde_path_free(sde_path* p) { delete p; }

int sde_path_level(const sde_path* p) { return p ? p->p.level : -1; }

int64_t sde_path_points(const sde_path* p) {
  return p ? p->p.steps() + 1 : 0;
}

const double* sde_path_values(const sde_path* p) {
  return p ? p->p.values.data() : nullptr;
}

sde_status sde_path_dump(const sde_path* p, const char* file) {
  if (const auto st = need(p && file, "path and file must be non-NULL"))
    return st;
  return guarded([&] { sde::brownian::dump(p->p, file); });
}

sde_status sde_simulate(const sde_model* m, const sde_path* p,
                        const double* x0, double epsilon, double n_trunc,
                        sde_trajectory** out) {
  if (const auto st = need(m && p && x0 && out,
                           "model, path, x0, out must be non-NULL"))
    return st;
  return guarded([&] {
    auto* t = new sde_trajectory;
    try {
      sde::euler::simulate_into(m->m, p->p, p->p.level, x0, epsilon, n_trunc,
                                t->t);
    } catch (...) {
      delete t;
      throw;
    }
    *out = t;
  });
}

void sde_trajectory_free(sde_trajectory* t) { delete t; }

int64_t sde_trajectory_points(const sde_trajectory* t) {
  return t ? t->t.steps() + 1 : 0;
}

const double* sde_trajectory_values(const sde_trajectory* t) {
  return t ? t->t.values.data() : nullptr;
}

int64_t sde_trajectory_exit_index(const sde_trajectory* t) {
  return t ? t->t.exit_index : -1;
}

int sde_trajectory_invalid(const sde_trajectory* t) {
  return t && t->t.invalid ? 1 : 0;
}

sde_status sde_rate_endpoint(const sde_model* m, double x0, double y,
                             double T, int level, double tol,
                             double* value_out, double* residual_out,
                             int* converged_out) {
  if (const auto st = need(m != nullptr, "model must be non-NULL")) return st;
  return guarded([&] {
    sde::skeleton::MinimizeOptions opts;
    if (tol > 0.0) opts.tol = tol;
    opts.check_stream = sde::rng::make_stream(0x67726164, 0);
    const auto est =
        sde::skeleton::minimize_rate_endpoint(m->m, x0, y, T, level, opts);
    if (value_out) *value_out = est.value;
    if (residual_out) *residual_out = est.residual;
    if (converged_out) *converged_out = est.converged ? 1 : 0;
  });
}

sde_status sde_run_config_file(const char* path, const char* out_override,
                               long long seed_override, int workers_override,
                               char** manifest_json_out) {
  if (const auto st = need(path != nullptr, "path must be non-NULL")) return st;
  return guarded([&] {
    const auto res = sde::experiment::run_config_file(
        path, out_override ? out_override : "", seed_override,
        workers_override);
    if (manifest_json_out) *manifest_json_out = dup_string(res.manifest_json);
  });
}

sde_status sde_run_config_text(const char* json, const char* out_override,
                               long long seed_override, int workers_override,
                               char** manifest_json_out) {
  if (const auto st = need(json != nullptr, "json must be non-NULL")) return st;
  return guarded([&] {
    const auto res = sde::experiment::run_config_text(
        json, out_override ? out_override : "", seed_override,
        workers_override);
    if (manifest_json_out) *manifest_json_out = dup_string(res.manifest_json);
  });
}

sde_status sde_check_suite_file(const char* path, const char* out_override,
                                long long seed_override, int workers_override,
                                char** report_out, int* all_passed_out) {
  if (const auto st = need(path != nullptr, "path must be non-NULL")) return st;
  bool all = false;
  const sde_status st = guarded([&] {
    const auto res = sde::experiment::check_suite_file(
        path, out_override ? out_override : "", seed_override,
        workers_override);
    all = res.all_passed;
    if (report_out) *report_out = dup_string(res.report);
  });
  if (st != SDE_OK) return st;
  if (all_passed_out) *all_passed_out = all ? 1 : 0;
  if (!all) {
    g_last_error = "one or more suite assertions failed";
    return SDE_ERR_THRESHOLD;
  }
  return SDE_OK;
}

void sde_string_free(char* s) { std::free(s); }

}  // extern "C"
