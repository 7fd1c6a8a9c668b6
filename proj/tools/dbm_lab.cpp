// dbm-lab: experiment runner for the desk-scale DBM checks.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "dbmlab/errors.hpp"
#include "dbmlab/experiments.hpp"

namespace {

using dbm::cli::ExitCode;

// Environment overrides sit below explicit flags.
void apply_env(std::string& out, int& workers, bool out_flag, bool workers_flag) {
  if (!out_flag)
    if (const char* v = std::getenv("DBM_LAB_OUT"); v && *v) out = v;
  if (!workers_flag)
    if (const char* v = std::getenv("DBM_LAB_WORKERS"); v && *v) {
      try {
        workers = std::stoi(v);
      } catch (const std::exception&) {
        throw dbm::ValidationError("DBM_LAB_WORKERS", "must be an integer");
      }
    }
  if (workers < 1) throw dbm::ValidationError("workers", "must be at least 1");
}

void print_summary(const dbm::cli::RunResult& r) {
  for (const auto& rep : r.reports) {
    std::cout << (rep.pass() ? "PASS " : "FAIL ") << rep.name;
    for (const auto& [k, v] : rep.statistics) std::cout << ' ' << k << '=' << v;
    std::cout << '\n';
  }
  for (const auto& f : r.failures) std::cout << "REPLICA-FAILED seed=" << f.seed << ": " << f.what << '\n';
  std::cout << "output: " << r.dir.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dyson Brownian motion laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, manifest_path;
  int workers = 1;
  std::vector<std::string> overrides;

  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  run->add_option("config", config_path, "config.json")->required();
  auto* out_opt = run->add_option("--out", out_dir, "output directory");
  auto* workers_opt = run->add_option("--workers", workers, "replica worker threads");

  auto* rep = app.add_subcommand("replay", "Recompute reports from a finished run");
  rep->add_option("manifest", manifest_path, "manifest.json")->required();
  rep->add_option("--threshold", overrides, "override a threshold, name=value (repeatable)");

  auto* list = app.add_subcommand("list-experiments", "List registered experiments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ExitCode::kExitValidation;
  }

  try {
    if (list->parsed()) {
      for (const auto& e : dbm::cli::list_experiments()) std::cout << e.name << "  " << e.description << '\n';
      return 0;
    }
    if (run->parsed()) {
      apply_env(out_dir, workers, out_opt->count() > 0, workers_opt->count() > 0);
      std::ifstream in(config_path);
      if (!in) throw dbm::ValidationError("config", "cannot open " + config_path);
      dbm::Json j;
      try {
        j = dbm::Json::parse(in);
      } catch (const dbm::Json::parse_error& e) {
        throw dbm::ValidationError("config", std::string("malformed JSON: ") + e.what());
      }
      const auto cfg = dbm::cli::ExperimentConfig::from_json(j);
      const auto r = dbm::cli::run_experiment(cfg, {out_dir, workers});
      print_summary(r);
      return r.exit_code();
    }
    std::map<std::string, double> th;
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos || eq == 0) throw dbm::ValidationError("threshold", "expected name=value");
      try {
        th[o.substr(0, eq)] = std::stod(o.substr(eq + 1));
      } catch (const std::exception&) {
        throw dbm::ValidationError("threshold." + o.substr(0, eq), "value is not a number");
      }
    }
    const auto r = dbm::cli::replay(manifest_path, th);
    print_summary(r);
    return r.exit_code();
  } catch (const dbm::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return ExitCode::kExitValidation;
  } catch (const dbm::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << '\n';
    return ExitCode::kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode::kExitRuntime;
  }
}
