#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "sde/experiment.hpp"
#include "sde/util.hpp"

using namespace sde;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sde_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// drop the wall-clock line so reruns are comparable byte for byte
std::string strip_generated(const std::string& text) {
  std::istringstream is(text);
  std::ostringstream os;
  std::string line;
  while (std::getline(is, line))
    if (line.rfind("# generated=", 0) != 0) os << line << "\n";
  return os.str();
}

}  // namespace

TEST_CASE("run_config_text: validation names the offending field") {
  const auto out = fresh_dir("val");
  CHECK_THROWS_WITH_AS(
      experiment::run_config_text(
          R"({"kind":"simulate","model":"loglog","n":6,"T":1,"x0":1})",
          out.string()),
      doctest::Contains("seed"), ConfigError);
  CHECK_THROWS_WITH_AS(
      experiment::run_config_text(
          R"({"kind":"warp","model":"loglog","seed":1})", out.string()),
      doctest::Contains("unknown kind"), ConfigError);
  CHECK_THROWS_WITH_AS(
      experiment::run_config_text(
          R"({"kind":"simulate","model":"loglog","seed":1,"T":1,"x0":1})",
          out.string()),
      doctest::Contains("n"), ConfigError);
  CHECK_THROWS_AS(
      experiment::run_config_text(
          R"({"kind":"simulate","model":"loglog","seed":-3,"n":6,"T":1,"x0":1})",
          out.string()),
      ConfigError);
  CHECK_THROWS_AS(
      experiment::run_config_text(
          R"({"kind":"simulate","model":"loglog","seed":1,"workers":0,
              "n":6,"T":1,"x0":1})",
          out.string()),
      ConfigError);
  CHECK_THROWS_AS(experiment::run_config_text("not json", out.string()),
                  ConfigError);
  CHECK_THROWS_AS(
      experiment::run_config_text(
          R"({"kind":"simulate","model":"bogus","seed":1,"n":6,"T":1,"x0":1})",
          out.string()),
      ConfigError);
  // T must be dyadic-compatible: rate requires T * 2^level integral
  CHECK_THROWS_AS(
      experiment::run_config_text(
          R"({"kind":"rate","model":"linear:0,1","seed":1,"x0":0,"y":1,
              "T":0.3,"level":6})",
          out.string()),
      ConfigError);
}

TEST_CASE("simulate: fixed point run writes artifact, manifest, metrics") {
  const auto out = fresh_dir("sim");
  const auto res = experiment::run_config_text(
      R"({"kind":"simulate","model":"loglog","seed":42,"n":6,"T":1,
          "M":4,"x0":1})",
      out.string());
  CHECK(res.metrics.at("x_T") == 1.0);
  CHECK(res.metrics.at("max_deviation") == 0.0);
  CHECK(res.metrics.at("exited_count") == 0.0);
  CHECK(res.metrics.at("invalid_count") == 0.0);

  REQUIRE(res.artifacts.size() == 1);
  CHECK(fs::exists(res.artifacts[0]));
  CHECK(fs::path(res.artifacts[0]).filename() == "trajectory.csv");
  const std::string csv = slurp(res.artifacts[0]);
  CHECK(csv.rfind("# model=loglog ", 0) == 0);
  CHECK(csv.find("n=6") != std::string::npos);
  CHECK(csv.find("seed=42") != std::string::npos);
  CHECK(csv.find("# generated=") != std::string::npos);
  CHECK(csv.find("k,t,x_1,exited") != std::string::npos);

  REQUIRE(fs::exists(res.manifest_path));
  const auto man = nlohmann::json::parse(res.manifest_json);
  CHECK(man.at("kind") == "simulate");
  CHECK(man.at("model") == "loglog");
  CHECK(man.at("seed") == 42);
  CHECK(man.at("config").at("M") == 4);
  CHECK(man.at("metrics").at("x_T") == 1.0);
  CHECK(slurp(res.manifest_path) == res.manifest_json);
}

TEST_CASE("simulate: seed and workers overrides land in the manifest") {
  const auto out = fresh_dir("ovr");
  const auto res = experiment::run_config_text(
      R"({"kind":"simulate","model":"loglog","seed":1,"n":5,"T":1,"x0":0.5})",
      out.string(), 99, 3);
  const auto man = nlohmann::json::parse(res.manifest_json);
  CHECK(man.at("seed") == 99);
  CHECK(man.at("workers") == 3);
  CHECK(man.at("config").at("seed") == 99);
}

TEST_CASE("reruns are byte-identical outside the timestamp lines") {
  const std::string cfg =
      R"({"kind":"converge","model":"loglog","seed":7,"x0":2,"T":1,
          "n_min":4,"n_max":6,"n_ref":8,"M":40})";
  const auto out_a = fresh_dir("det_a");
  const auto out_b = fresh_dir("det_b");
  const auto ra = experiment::run_config_text(cfg, out_a.string());
  const auto rb = experiment::run_config_text(cfg, out_b.string());
  REQUIRE(ra.artifacts.size() == rb.artifacts.size());
  for (std::size_t i = 0; i < ra.artifacts.size(); ++i)
    CHECK(strip_generated(slurp(ra.artifacts[i])) ==
          strip_generated(slurp(rb.artifacts[i])));
  CHECK(ra.metrics == rb.metrics);

  // worker count must not leak into any numbers
  const auto out_c = fresh_dir("det_c");
  const auto rc = experiment::run_config_text(cfg, out_c.string(), -1, 4);
  CHECK(rc.metrics == ra.metrics);
  for (std::size_t i = 0; i < ra.artifacts.size(); ++i)
    CHECK(strip_generated(slurp(rc.artifacts[i])) ==
          strip_generated(slurp(ra.artifacts[i])));
}

TEST_CASE("envelope kind: audit metrics and artifact") {
  const auto out = fresh_dir("env");
  const auto res = experiment::run_config_text(
      R"({"kind":"envelope","model":"loglog","seed":3,"C":2,"mu":1,
          "N_grid":[3,10],"samples":2000})",
      out.string());
  CHECK(res.metrics.at("drift_violations") == 0.0);
  CHECK(res.metrics.count("diff_violations") == 1);
  CHECK(res.metrics.at("C_est") > 0.0);
  CHECK(res.metrics.at("mu_est") == 1.0);
  REQUIRE(res.artifacts.size() == 1);
  CHECK(fs::path(res.artifacts[0]).filename() == "envelope.csv");
}

TEST_CASE("rate kind: endpoint optimization through the config layer") {
  const auto out = fresh_dir("rate");
  const auto res = experiment::run_config_text(
      R"({"kind":"rate","model":"linear:0,1","seed":5,"x0":0,"y":1,
          "T":1,"level":6})",
      out.string());
  CHECK(res.metrics.at("converged") == 1.0);
  CHECK(res.metrics.at("value") > 0.47);
  CHECK(res.metrics.at("value") < 0.53);
  CHECK(res.metrics.at("grad_check_err") < 1e-5);
  std::vector<std::string> names;
  for (const auto& a : res.artifacts)
    names.push_back(fs::path(a).filename().string());
  CHECK(std::count(names.begin(), names.end(), "rate.csv") == 1);
  CHECK(std::count(names.begin(), names.end(), "control.csv") == 1);
  CHECK(std::count(names.begin(), names.end(), "path.csv") == 1);
}

TEST_CASE("suite: passes, failures, and config_path cases") {
  const auto out = fresh_dir("suite");
  const std::string good = R"({
    "cases": [{
      "name": "pin",
      "config": {"kind":"simulate","model":"loglog","seed":9,"n":5,"T":1,"x0":1},
      "assertions": [
        {"field":"x_T","op":"==","value":1.0},
        {"field":"max_deviation","op":"<=","value":0.0}
      ]
    }]
  })";
  const auto ok = experiment::check_suite_text(good, (out / "good").string());
  CHECK(ok.all_passed);
  CHECK(ok.cases == 1);
  CHECK(ok.assertions == 2);
  CHECK(ok.failures == 0);
  CHECK(ok.report.find("[PASS] pin: x_T == 1") != std::string::npos);
  CHECK(ok.report.find("[FAIL]") == std::string::npos);
  // per-case subdirectory under the override
  CHECK(fs::exists(out / "good" / "pin" / "manifest.json"));

  const std::string bad = R"({
    "cases": [{
      "name": "wrong",
      "config": {"kind":"simulate","model":"loglog","seed":9,"n":5,"T":1,"x0":1},
      "assertions": [
        {"field":"x_T","op":">","value":2.0},
        {"field":"no_such_metric","op":"==","value":0.0}
      ]
    }]
  })";
  const auto fail = experiment::check_suite_text(bad, (out / "bad").string());
  CHECK_FALSE(fail.all_passed);
  CHECK(fail.failures == 2);
  CHECK(fail.report.find("[FAIL] wrong: x_T > 2") != std::string::npos);
  CHECK(fail.report.find("(actual missing)") != std::string::npos);

  const fs::path cfg_file = out / "pin.json";
  {
    std::ofstream os(cfg_file);
    os << R"({"kind":"simulate","model":"loglog","seed":9,"n":5,"T":1,"x0":-1})";
  }
  const std::string by_path = std::string(R"({"cases":[{"name":"frompath",
    "config_path":")") + cfg_file.string() +
      R"(","assertions":[{"field":"x_T","op":"==","value":-1.0}]}]})";
  const auto viapath =
      experiment::check_suite_text(by_path, (out / "path").string());
  CHECK(viapath.all_passed);

  CHECK_THROWS_AS(experiment::check_suite_text(R"({"cases":[{}]})",
                                               (out / "x").string()),
                  ConfigError);
  CHECK_THROWS_AS(experiment::check_suite_text(R"({"nope":1})",
                                               (out / "y").string()),
                  ConfigError);
  const std::string bad_op = R"({
    "cases": [{
      "config": {"kind":"simulate","model":"loglog","seed":9,"n":5,"T":1,"x0":1},
      "assertions": [{"field":"x_T","op":"~","value":1.0}]
    }]
  })";
  CHECK_THROWS_AS(experiment::check_suite_text(bad_op, (out / "z").string()),
                  ConfigError);
}

TEST_CASE("ldp-exit kind: rows surface as indexed metrics") {
  const auto out = fresh_dir("ldpexit");
  const auto res = experiment::run_config_text(
      R"({"kind":"ldp-exit","model":{"spec":"linear:-1,1",
          "truncate":{"radius":2}},
          "seed":12,"x0":0,"R_dom":1,"T":1,"level":7,
          "eps_list":[1.0,0.5],"M":300})",
      out.string());
  CHECK(res.metrics.count("phat_0") == 1);
  CHECK(res.metrics.count("hits_1") == 1);
  CHECK(res.metrics.count("lo95_0") == 1);
  CHECK(res.metrics.count("hi95_1") == 1);
  CHECK(res.metrics.at("phat_0") >= res.metrics.at("phat_1"));
  REQUIRE(!res.artifacts.empty());
  CHECK(fs::path(res.artifacts[0]).filename() == "ldp_exit.csv");
}
