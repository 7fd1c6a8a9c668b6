#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dbmlab/diagnostics.hpp"

namespace dbm::cli {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kManifestSchemaVersion = 1;

enum ExitCode : int { kExitPass = 0, kExitCheckFailure = 2, kExitValidation = 3, kExitRuntime = 4 };

struct ExperimentConfig {
  std::string experiment;
  int N = 0;
  double beta = 0.0;
  std::vector<std::uint64_t> seeds;
  std::optional<std::array<double, 2>> t_window;
  Json params = Json::object();  // merged with the experiment defaults
  std::string output_dir;

  // Validates every field and rejects unknown keys; errors name the field path.
  static ExperimentConfig from_json(const Json& j);
  Json to_json() const;
};

struct ExperimentInfo {
  std::string name;
  std::string description;
};
std::vector<ExperimentInfo> list_experiments();
// Parameter block defaults of one experiment (thresholds excluded).
Json default_params(const std::string& experiment);

struct RunOptions {
  std::string out_dir;  // overrides config.output_dir when non-empty
  int workers = 1;
};

struct ReplicaFailure {
  std::uint64_t seed = 0;
  std::string what;
};

struct RunResult {
  std::vector<DiagnosticsReport> reports;
  std::vector<ReplicaFailure> failures;
  fs::path dir;
  Json report_json;

  bool pass() const;
  int exit_code() const;
};

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt);

// Recomputes the reports from persisted data. Without overrides the result must
// reproduce report.json byte for byte (IntegrityError otherwise).
RunResult replay(const fs::path& manifest_path, const std::map<std::string, double>& threshold_overrides = {});

// Applies named threshold values to every report that carries them and re-evaluates.
void apply_thresholds(std::vector<DiagnosticsReport>& reports, const std::map<std::string, double>& values);

}  // namespace dbm::cli
