#include <doctest.h>

#include <fstream>
#include <sstream>

#include "finsler/error.hpp"
#include "finsler/harness.hpp"

using namespace finsler;
using namespace finsler::harness;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = FINSLER_CONFIG_DIR;

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("finsler_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ExperimentResult run(const std::string& text) {
  return run_experiment(parse_experiment(parse_json_text(text, "inline"), kConfigs, "config"));
}

}  // namespace

TEST_CASE("config diagnostics") {
  const auto syntax = error_of([] { parse_json_text("{\n  \"kind\": \"rigidity\",\n  \"seed\": ,\n}", "cfg.json"); });
  CHECK(syntax.find("ConfigError") != std::string::npos);
  CHECK(syntax.find("cfg.json:3:") != std::string::npos);

  const auto parse = [](const std::string& t) {
    return error_of([&] { parse_experiment(parse_json_text(t, "t"), kConfigs, "config"); });
  };
  CHECK(parse(R"({"kind": "rigidity", "metric": {"family": "sphere"}})").find("config/seed") != std::string::npos);
  CHECK(parse(R"({"kind": "rigidity", "seed": 1, "metric": {"family": "sphere", "radus": 2}})")
            .find("config/metric/radus: unknown field") != std::string::npos);
  CHECK(parse(R"({"kind": "ridigity", "seed": 1, "metric": {"family": "sphere"}})").find("config/kind") !=
        std::string::npos);
  CHECK(parse(R"({"kind": "rigidity", "seed": 1, "metric": {"family": "torus"}})").find("config/metric/family") !=
        std::string::npos);
  CHECK(parse(R"({"kind": "rigidity", "seed": 1, "metric": {"family": "sphere"}, "tolerances": {"vanish": 0}})")
            .find("config/tolerances/vanish: must be positive") != std::string::npos);
  CHECK(parse(R"({"kind": "rigidity", "seed": -4, "metric": {"family": "sphere"}})").find("config/seed") !=
        std::string::npos);
  CHECK(parse(R"({"spec_version": 2, "kind": "rigidity", "seed": 1, "metric": {"family": "sphere"}})")
            .find("spec_version") != std::string::npos);
  CHECK(parse(R"({"kind": "rigidity", "seed": 1})").find("exactly one of 'metric' and 'metric_file'") !=
        std::string::npos);

  // a seed override supplies the mandatory seed
  const auto c = parse_experiment(parse_json_text(R"({"kind": "rigidity", "metric": {"family": "sphere"}})", "t"),
                                  kConfigs, "config", 42);
  CHECK(c.seed == 42);

  // budget and expectation keys are checked when the experiment runs
  const auto r = run(R"({"kind": "rigidity", "seed": 1, "metric": {"family": "sphere"}, "budget": {"pionts": 3}})");
  CHECK(r.exit_code == 1);
  CHECK(r.error.find("budget/pionts: unknown field") != std::string::npos);
}

TEST_CASE("metric specs round-trip through JSON") {
  const auto spec = parse_metric_spec(load_json_file(kConfigs / "metrics" / "randers_parallel.json"));
  const auto again = parse_metric_spec(metric_spec_to_json(spec));
  const auto a = catalog_instantiate(spec), b = catalog_instantiate(again);
  CHECK(a.id() == b.id());
  const Vec x = (Vec(3) << 0.1, 1.0, 0.3).finished(), y = (Vec(3) << 0.3, -1.0, 0.5).finished();
  CHECK(a.F(x, y) == b.F(x, y));
  const auto bad = error_of([] { catalog_instantiate(parse_metric_spec(parse_json_text(
      R"({"family": "randers", "alpha": {"family": "euclidean", "dimension": 2}, "beta": {"constant": [1.2, 0]}})",
      "t"))); });
  CHECK(bad.find("SpecValidation") != std::string::npos);
}

TEST_CASE("run_experiment examples") {
  SUBCASE("rigidity on the round sphere") {
    const auto r = run(R"({"name": "s", "kind": "rigidity", "seed": 5, "metric_file": "metrics/sphere1.json"})");
    CHECK(r.exit_code == 0);
    CHECK(r.verdict == "consistent_with_theorem");
    CHECK(r.report["seed"] == 5);
    CHECK(r.report["tolerances"].contains("vanish"));
  }
  SUBCASE("rigidity on sphere x quartic serializes the mixed witness") {
    const auto r = run(R"({"kind": "rigidity", "seed": 6, "metric_file": "metrics/sphere_x_quartic.json",
                           "expect": {"witness_mixed": true, "witness_abs_K_below": 1e-6}})");
    CHECK(r.exit_code == 0);
    CHECK(r.verdict == "consistent_with_theorem");
    REQUIRE(r.report["witnesses"].size() == 1);
    const auto& w = r.report["witnesses"][0];
    CHECK(w["mixed_blocks"] == true);
    CHECK(w["flag"]["y"].size() == 4);
    CHECK(std::abs(w["K"].get<double>()) < 1e-6);
  }
  SUBCASE("a not_berwald verdict is not a failure") {
    const auto r = run(R"({"kind": "berwald_check", "seed": 7, "metric_file": "metrics/randers_nonparallel.json",
                           "detectors": ["berwald"]})");
    CHECK(r.exit_code == 0);
    CHECK(r.verdict == "not_berwald");
  }
  SUBCASE("a failed expectation exits 2 and names the check") {
    const auto r = run(R"({"kind": "berwald_check", "seed": 7, "metric_file": "metrics/randers_nonparallel.json",
                           "detectors": ["berwald"], "expect": {"berwald": true}})");
    CHECK(r.exit_code == 2);
    CHECK(r.status == "property_failure");
    CHECK(r.error.find("berwald") != std::string::npos);
  }
  SUBCASE("bonnet on a flat box reports the missing hypothesis") {
    const auto r = run(R"({"kind": "bonnet_diameter", "seed": 8, "metric_file": "metrics/euclidean2.json"})");
    CHECK(r.exit_code == 0);
    CHECK(r.report["result"]["note"] == "unbounded family; Bonnet hypothesis absent");
    CHECK_FALSE(r.report["result"].contains("bound"));
  }
  SUBCASE("holonomy of an open curve is a configuration error") {
    const auto r = run(R"({"kind": "transport", "seed": 9, "metric_file": "metrics/sphere1.json",
                           "params": {"curve": {"segments": [{"type": "line", "from": [1, 0], "to": [1, 1]}]},
                                      "holonomy": true}})");
    CHECK(r.exit_code == 1);
  }
  SUBCASE("geodesic polyline CSV") {
    const auto r = run(R"({"kind": "geodesic", "seed": 1, "metric_file": "metrics/sphere1.json",
                           "params": {"x0": [1.5707963267948966, 0], "y0": [0, 1], "length": 1.0}})");
    CHECK(r.exit_code == 0);
    CHECK(r.csv.rfind("t,x0,x1,y0,y1\r\n", 0) == 0);
  }
}

TEST_CASE("reports are deterministic") {
  const std::string cfg = R"({"kind": "curvature_scan", "seed": 21, "metric_file": "metrics/quartic.json",
                              "budget": {"flags": 60}})";
  const auto c = parse_experiment(parse_json_text(cfg, "t"), kConfigs, "config");
  RunOptions one, three;
  three.workers = 3;
  const auto a = run_experiment(c, one), b = run_experiment(c, three), again = run_experiment(c, one);
  CHECK(a.report.dump() == b.report.dump());
  CHECK(a.csv == b.csv);
  CHECK(a.report.dump() == again.report.dump());
  CHECK(a.report.dump().find("wall") == std::string::npos);
}

TEST_CASE("suites") {
  SUBCASE("empty suite") {
    const auto e = error_of([] { run_suite(parse_json_text(R"({"spec_version": 1, "experiments": []})", "t"), kConfigs, {}); });
    CHECK(e.find("ConfigError") != std::string::npos);
  }
  SUBCASE("broken fixture exits 2 and the summary names it") {
    RunOptions o;
    o.out_dir = scratch("broken");
    const auto m = run_suite(load_json_file(kConfigs / "broken_suite.json"), kConfigs, o);
    CHECK(m.exit_code == 2);
    const auto summary = slurp(o.out_dir / "summary.csv");
    CHECK(summary.find("nonparallel_randers_claimed_berwald,berwald_check,property_failure") != std::string::npos);
    const auto js = parse_json_text(slurp(o.out_dir / "summary.json"), "summary");
    CHECK(js["failures"] == 1);
    const auto man = parse_json_text(slurp(o.out_dir / "manifest.json"), "manifest");
    CHECK(man.contains("wall_time_seconds"));
    CHECK(man["tool_version"] == kToolVersion);
    CHECK(man["config_hash"].get<std::string>().size() == 16);
    CHECK(man["experiments"].size() == 2);
  }
  SUBCASE("errors are collected, not fail-fast") {
    RunOptions o;
    o.out_dir = scratch("collect");
    o.workers = 2;
    const auto suite = parse_json_text(R"({"spec_version": 1, "experiments": [
        {"kind": "rigidity", "metric": {"family": "sphere"}},
        {"file": "experiments/rigidity_sphere.json"},
        {"file": "experiments/missing.json"}]})", "t");
    const auto m = run_suite(suite, kConfigs, o);
    CHECK(m.exit_code == 1);
    REQUIRE(m.experiments.size() == 3);
    CHECK(m.experiments[0].status == "config_error");
    CHECK(m.experiments[1].status == "pass");
    CHECK(m.experiments[2].error.find("cannot open") != std::string::npos);
    CHECK(fs::exists(o.out_dir / "rigidity_sphere.json"));
  }
  SUBCASE("duplicate names are rejected") {
    RunOptions o;
    o.out_dir = scratch("dup");
    const auto suite = parse_json_text(R"({"experiments": [{"file": "experiments/rigidity_sphere.json"},
                                                           {"file": "experiments/rigidity_sphere.json"}]})", "t");
    const auto m = run_suite(suite, kConfigs, o);
    CHECK(m.exit_code == 1);
    CHECK(m.experiments[1].error.find("duplicate") != std::string::npos);
  }
}

TEST_CASE("CSV quoting and config hashes") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_field("two\nlines") == "\"two\nlines\"");
  const auto a = parse_json_text(R"({"a": 1, "b": [1, 2]})", "t");
  CHECK(config_hash(a) == config_hash(parse_json_text(R"({ "a" : 1, "b" : [1,2] })", "t")));
  CHECK(config_hash(a) != config_hash(parse_json_text(R"({"a": 2, "b": [1, 2]})", "t")));
}
