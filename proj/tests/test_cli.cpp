#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dbmlab/errors.hpp"
#include "dbmlab/experiments.hpp"

using namespace dbm;
using namespace dbm::cli;
namespace fs = std::filesystem;

namespace {

// Scratch directory removed on destruction.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& tag)
      : dir(fs::temp_directory_path() / ("dbmlab-test-" + tag + "-" + std::to_string(::getpid()))) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  Scratch(const Scratch&) = delete;
  Scratch& operator=(const Scratch&) = delete;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& name, const Json& j) {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump();
  return p;
}

// Runs the CLI binary; returns its exit status and captures stdout+stderr.
int run_cli(const std::string& args, std::string* output = nullptr, const std::string& env = "") {
  const fs::path log = fs::temp_directory_path() / ("dbmlab-cli-" + std::to_string(::getpid()) + ".log");
  const std::string cmd = env + " " + std::string(DBM_LAB_BIN) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  if (output) *output = slurp(log);
  fs::remove(log);
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Json poisson_config() {
  return {{"experiment", "level-repulsion"},
          {"N", 200},
          {"beta", 1},
          {"seeds", {1, 2, 3, 4, 5, 6}},
          {"params", {{"generator", "poisson-control"}}}};
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("semicircle invariance passes with defaults") {
    Scratch s("inv");
    const auto cfg = ExperimentConfig::from_json({{"experiment", "semicircle-invariance"}, {"N", 200}, {"beta", 2}, {"seeds", {0}}});
    const RunResult r = run_experiment(cfg, {(s.dir / "out").string(), 1});
    CHECK(r.exit_code() == kExitPass);
    REQUIRE(r.reports.size() == 1);
    CHECK(r.reports[0].statistics.at("sup_deviation") <= 1e-4);
    for (const char* f : {"manifest.json", "report.json", "summary.csv"}) CHECK(fs::exists(r.dir / f));
    bool svg = false;
    for (const auto& e : fs::directory_iterator(r.dir / "figures")) svg = svg || e.path().extension() == ".svg";
    CHECK(svg);
  }

  TEST_CASE("validation errors name the field") {
    try {
      ExperimentConfig::from_json({{"experiment", "semicircle-invariance"}, {"N", 200}, {"seeds", {0}}});
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("beta") != std::string::npos);
    }
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"experiment", "nope"}, {"N", 200}, {"beta", 2}, {"seeds", {0}}}),
                    ValidationError);
    CHECK_THROWS_AS(
        ExperimentConfig::from_json({{"experiment", "level-repulsion"}, {"N", 20}, {"beta", 2}, {"seeds", {0}}, {"x", 1}}),
        ValidationError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"experiment", "level-repulsion"},
                                                 {"N", 20},
                                                 {"beta", 2},
                                                 {"seeds", {0}},
                                                 {"params", {{"u_maxx", 0.3}}}}),
                    ValidationError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"experiment", "level-repulsion"}, {"N", 20}, {"beta", 2}, {"seeds", {1, 1}}}),
                    ValidationError);
  }

  TEST_CASE("binary exit codes") {
    Scratch s("exit");
    std::string out;
    const fs::path bad = write_config(s.dir, "bad.json", {{"experiment", "semicircle-invariance"}, {"N", 200}, {"seeds", {0}}});
    CHECK(run_cli("run " + bad.string() + " --out " + (s.dir / "bad").string(), &out) == kExitValidation);
    CHECK(out.find("beta") != std::string::npos);

    const fs::path pc = write_config(s.dir, "poisson.json", poisson_config());
    CHECK(run_cli("run " + pc.string() + " --out " + (s.dir / "p").string()) == kExitCheckFailure);

    CHECK(run_cli("run " + (s.dir / "missing.json").string()) == kExitValidation);
    CHECK(run_cli("frobnicate") == kExitValidation);
    CHECK(run_cli("list-experiments", &out) == 0);
    CHECK(out.find("local-gibbs-sample") != std::string::npos);
  }

  TEST_CASE("environment overrides sit below flags") {
    Scratch s("env");
    const fs::path pc = write_config(s.dir, "poisson.json", poisson_config());
    run_cli("run " + pc.string(), nullptr, "DBM_LAB_OUT=" + (s.dir / "from-env").string());
    CHECK(fs::exists(s.dir / "from-env" / "report.json"));
    run_cli("run " + pc.string() + " --out " + (s.dir / "from-flag").string(), nullptr,
            "DBM_LAB_OUT=" + (s.dir / "ignored").string());
    CHECK(fs::exists(s.dir / "from-flag" / "report.json"));
    CHECK_FALSE(fs::exists(s.dir / "ignored"));
    CHECK(run_cli("run " + pc.string() + " --out " + (s.dir / "w").string(), nullptr, "DBM_LAB_WORKERS=zero") ==
          kExitValidation);
  }

  TEST_CASE("reports are byte-identical across runs and worker counts") {
    Scratch s("det");
    const auto cfg = ExperimentConfig::from_json(poisson_config());
    const RunResult a = run_experiment(cfg, {(s.dir / "a").string(), 1});
    const RunResult b = run_experiment(cfg, {(s.dir / "b").string(), 3});
    CHECK(slurp(a.dir / "report.json") == slurp(b.dir / "report.json"));
    CHECK(slurp(a.dir / "summary.csv") == slurp(b.dir / "summary.csv"));
  }

  TEST_CASE("replay reproduces, detects tampering and re-evaluates thresholds") {
    Scratch s("replay");
    const auto cfg = ExperimentConfig::from_json(poisson_config());
    const RunResult r = run_experiment(cfg, {(s.dir / "run").string(), 1});
    REQUIRE(r.exit_code() == kExitCheckFailure);
    const fs::path manifest = r.dir / "manifest.json";

    const RunResult again = replay(manifest);
    CHECK(again.report_json.dump(2) + "\n" == slurp(r.dir / "report.json"));

    // Widening the band flips the flag; statistics are untouched.
    const RunResult loose = replay(manifest, {{"band", 5.0}});
    CHECK(loose.exit_code() == kExitPass);
    CHECK(loose.reports[0].statistics.at("slope") == r.reports[0].statistics.at("slope"));
    std::string out;
    CHECK(run_cli("replay " + manifest.string() + " --threshold band=5", &out) == kExitPass);
    CHECK(run_cli("replay " + manifest.string() + " --threshold band", &out) == kExitValidation);

    // Truncate one data file.
    fs::path victim;
    for (const auto& e : fs::directory_iterator(r.dir / "data")) victim = e.path();
    REQUIRE_FALSE(victim.empty());
    fs::resize_file(victim, fs::file_size(victim) - 8);
    CHECK_THROWS_AS(replay(manifest), IntegrityError);
    CHECK(run_cli("replay " + manifest.string(), &out) == kExitRuntime);
    CHECK(out.find("integrity") != std::string::npos);
  }

  TEST_CASE("every registered experiment has defaults") {
    const auto list = list_experiments();
    CHECK(list.size() == 11);
    for (const auto& e : list) CHECK(default_params(e.name).is_object());
  }
}
