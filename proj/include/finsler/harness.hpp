#pragma once

// Experiment harness: JSON configs, dispatch to the pipelines, reports,
// manifests and suites.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "finsler/engine.hpp"
#include "finsler/metric.hpp"

namespace finsler::harness {

using Json = nlohmann::ordered_json;

inline constexpr int kSpecVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

enum class ExperimentKind { curvature_scan, berwald_check, rigidity, transport, geodesic, bonnet_diameter, binet_legendre };

std::string to_string(ExperimentKind k);
ExperimentKind parse_kind(const std::string& name);

enum class OutputFormat { json, csv, both };
OutputFormat parse_format(const std::string& name);

struct ExperimentConfig {
  std::string name;
  ExperimentKind kind = ExperimentKind::curvature_scan;
  MetricSpec metric;
  ChartDomain region;  // empty -> inset chart
  std::uint64_t seed = 0;
  JetEngine engine;
  Json params = Json::object();      // kind-specific inputs
  Json budget = Json::object();
  Json tolerances = Json::object();
  Json expect = Json::object();
  std::vector<std::string> detectors;  // berwald_check: "berwald", "riemann"
  Json source;                         // the config object as read
};

/// Reads a JSON file; parse errors become ConfigError with line and column.
Json load_json_file(const std::filesystem::path& path);
Json parse_json_text(const std::string& text, const std::string& origin);

MetricSpec parse_metric_spec(const Json& j, const std::string& where = "metric");
Json metric_spec_to_json(const MetricSpec& spec);

/// `base_dir` resolves relative "metric_file" references. `seed_override`
/// replaces (or supplies) the mandatory seed.
ExperimentConfig parse_experiment(const Json& j, const std::filesystem::path& base_dir, const std::string& where,
                                  std::optional<std::uint64_t> seed_override = std::nullopt);

struct ExperimentResult {
  std::string name;
  std::string kind;
  std::string status;   // pass, property_failure, config_error, error
  std::string verdict;
  int exit_code = 0;    // 0 pass, 1 config error, 2 property failure
  Json report;          // deterministic payload
  std::string csv;      // plot data / records
  std::string error;
};

struct RunOptions {
  int workers = 1;
  OutputFormat format = OutputFormat::json;
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed_override;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

struct ManifestEntry {
  std::string name, kind, status, verdict;
  int exit_code = 0;
  std::vector<std::string> outputs;
  std::string error;
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string config_hash;
  double wall_time_seconds = 0.0;
  std::vector<ManifestEntry> experiments;
  std::vector<std::string> outputs;
  int exit_code = 0;
  Json to_json() const;
};

/// Runs one config object and writes its report files and manifest.json.
RunManifest run_config(const Json& config, const std::filesystem::path& base_dir, const RunOptions& options);

/// Runs every experiment of a suite (concurrently up to options.workers),
/// collecting per-experiment errors, and writes summary.json, summary.csv and
/// manifest.json. An empty suite is a ConfigError.
RunManifest run_suite(const Json& suite, const std::filesystem::path& base_dir, const RunOptions& options);

/// RFC 4180 field quoting.
std::string csv_field(const std::string& s);

/// 64-bit FNV-1a of the canonical dump, as 16 hex digits.
std::string config_hash(const Json& j);

}  // namespace finsler::harness
