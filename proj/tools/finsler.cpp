// finsler: command-line front end for the experiment harness.

#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "finsler/error.hpp"
#include "finsler/harness.hpp"

namespace fh = finsler::harness;

namespace {

struct Verb {
  const char* name;
  const char* kind;
  const char* detector;  // berwald_check verbs pick one detector
  const char* help;
};

constexpr Verb kVerbs[] = {
    {"scan", "curvature_scan", nullptr, "flag curvature scan over a region"},
    {"berwald", "berwald_check", "berwald", "Berwald detector"},
    {"riemann", "berwald_check", "riemann", "Riemannian detector"},
    {"rigidity", "rigidity", nullptr, "rigidity verification"},
    {"transport", "transport", nullptr, "parallel transport, linearity and holonomy"},
    {"geodesic", "geodesic", nullptr, "geodesic integration"},
    {"binet", "binet_legendre", nullptr, "Binet-Legendre metric and connection coincidence"},
    {"bonnet", "bonnet_diameter", nullptr, "diameter estimate against the Bonnet bound"},
};

void print(const fh::RunManifest& m) {
  for (const auto& e : m.experiments) {
    std::cout << e.name << " [" << e.kind << "] " << e.status;
    if (!e.verdict.empty() && e.verdict != "none") std::cout << " verdict=" << e.verdict;
    std::cout << " exit=" << e.exit_code << "\n";
    if (!e.error.empty()) std::cerr << e.name << ": " << e.error << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finsler geometry experiment harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fh::kToolVersion);

  std::string config, format = "json", out = ".";
  std::optional<std::uint64_t> seed;
  int workers = 1;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "experiment or suite JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--format", format, "report format")->check(CLI::IsMember({"json", "csv", "both"}));
    sub->add_option("--workers", workers, "worker threads")->check(CLI::Range(1, 256));
  };
  std::map<CLI::App*, const Verb*> verbs;
  for (const auto& v : kVerbs) {
    auto* sub = app.add_subcommand(v.name, v.help);
    common(sub);
    verbs[sub] = &v;
  }
  auto* suite = app.add_subcommand("suite", "run every experiment of a suite file");
  common(suite);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  fh::RunOptions opts;
  opts.workers = workers;
  opts.out_dir = out;
  opts.seed_override = seed;
  try {
    opts.format = fh::parse_format(format);
    const std::filesystem::path path(config);
    fh::Json j = fh::load_json_file(path);
    const auto base = path.parent_path();
    fh::RunManifest m;
    if (suite->parsed()) {
      m = fh::run_suite(j, base, opts);
    } else {
      const Verb* v = nullptr;
      for (const auto& [sub, verb] : verbs)
        if (sub->parsed()) v = verb;
      if (!j.is_object()) throw finsler::Error(finsler::ErrorCode::ConfigError, path.string() + ": expected an object");
      if (!j.contains("kind")) j["kind"] = v->kind;
      if (j["kind"] != v->kind)
        throw finsler::Error(finsler::ErrorCode::ConfigError, path.string() + "/kind: '" + j["kind"].dump() +
                                                                 "' does not match subcommand " + v->name);
      if (v->detector && !j.contains("detectors")) j["detectors"] = fh::Json::array({v->detector});
      m = fh::run_config(j, base, opts);
    }
    print(m);
    return m.exit_code;
  } catch (const finsler::Error& e) {
    std::cerr << e.what() << "\n";
    const auto c = e.code();
    return c == finsler::ErrorCode::ConfigError || c == finsler::ErrorCode::SpecValidation ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
}
