#pragma once

// Internal registry shared by the runner and the experiment definitions.

#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "dbmlab/experiments.hpp"

namespace dbm::cli::detail {

struct Context {
  const ExperimentConfig& cfg;
  fs::path dir;      // run directory
  fs::path figures;  // where figure CSVs go
  int workers = 1;
  std::vector<std::uint64_t> seeds_ok;  // replicas with data on disk, sorted

  const Json& p() const { return cfg.params; }
  fs::path data(const std::string& name) const { return dir / "data" / name; }
  double t1() const { return cfg.t_window ? (*cfg.t_window)[0] : 0.0; }
};

// Files written by a simulation step, relative to the run directory.
class FileLog {
 public:
  void add(const std::string& rel) {
    std::lock_guard lock(mu_);
    files_.insert(rel);
  }
  std::vector<std::string> files() const { return {files_.begin(), files_.end()}; }

 private:
  mutable std::mutex mu_;
  std::set<std::string> files_;
};

struct Experiment {
  std::string name;
  std::string description;
  Json defaults;                            // parameter block defaults
  std::vector<std::string> threshold_names; // keys accepted under params.thresholds
  // Optional default time window when the config has none.
  std::function<std::array<double, 2>(const ExperimentConfig&)> default_window;
  // Shared data computed once (may be empty).
  std::function<void(const Context&, FileLog&)> prepare;
  // Per replica; empty for deterministic experiments.
  std::function<void(const Context&, std::uint64_t seed, FileLog&)> replica;
  std::function<std::vector<DiagnosticsReport>(const Context&)> analyze;
};

const std::vector<Experiment>& registry();
const Experiment& find_experiment(const std::string& name);

}  // namespace dbm::cli::detail
