#pragma once

#include <map>
#include <string>
#include <vector>

namespace sde::experiment {

// Outcome of one config run. Metrics are the flat numeric summary the
// check subcommand's assertions evaluate against; they are also echoed in
// the manifest JSON next to the resolved config and build id.
struct RunResult {
  std::map<std::string, double> metrics;
  std::vector<std::string> artifacts;
  std::string manifest_path;
  std::string manifest_json;
};

// Runs a JSON experiment config (see README for the per-kind schemas).
// seed_override < 0 and workers_override <= 0 mean "no override"; an empty
// out_override keeps the config's output directory. Throws ConfigError for
// invalid configs and NumericalError when a study fails numerically.
RunResult run_config_text(const std::string& json_text,
                          const std::string& out_override = "",
                          long long seed_override = -1,
                          int workers_override = 0);

RunResult run_config_file(const std::string& path,
                          const std::string& out_override = "",
                          long long seed_override = -1,
                          int workers_override = 0);

struct SuiteResult {
  bool all_passed = false;
  int cases = 0;
  int assertions = 0;
  int failures = 0;
  std::string report;  // printable table, one line per assertion
};

// Suite file: {"cases": [{"name": ..., "config": {...} | "config_path":
// ..., "assertions": [{"field": ..., "op": "<=|<|>=|>|==|!=", "value": ...,
// "tol": ...}]}]}. tol applies to == / != and must be >= 0.
SuiteResult check_suite_text(const std::string& json_text,
                             const std::string& out_override = "",
                             long long seed_override = -1,
                             int workers_override = 0);

SuiteResult check_suite_file(const std::string& path,
                             const std::string& out_override = "",
                             long long seed_override = -1,
                             int workers_override = 0);

}  // namespace sde::experiment
