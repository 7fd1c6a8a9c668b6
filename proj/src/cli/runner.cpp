#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <iomanip>
#include <sstream>
#include <thread>

#include "dbmlab/artifacts.hpp"
#include "experiment.hpp"

namespace dbm::cli {

using detail::Context;
using detail::Experiment;
using detail::FileLog;

namespace {

const char* json_kind(const Json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

// Overlays `user` onto `defaults`, rejecting unknown keys and type changes.
Json merge_params(const Json& defaults, const Json& user, const std::string& path,
                  const std::vector<std::string>& threshold_names) {
  if (!user.is_object()) throw ValidationError(path, "must be an object");
  Json out = defaults;
  for (const auto& [key, value] : user.items()) {
    const std::string here = path + "." + key;
    if (key == "thresholds" && path == "params") {
      if (!value.is_object()) throw ValidationError(here, "must be an object");
      for (const auto& [tk, tv] : value.items()) {
        if (std::find(threshold_names.begin(), threshold_names.end(), tk) == threshold_names.end())
          throw ValidationError(here + "." + tk, "unknown threshold");
        if (!tv.is_number()) throw ValidationError(here + "." + tk, "must be a number");
      }
      out[key] = value;
      continue;
    }
    if (!defaults.contains(key)) throw ValidationError(here, "unknown key");
    const Json& d = defaults.at(key);
    if (d.is_object()) {
      out[key] = merge_params(d, value, here, threshold_names);
    } else if (std::string(json_kind(d)) != json_kind(value)) {
      throw ValidationError(here, std::string("expected ") + json_kind(d) + ", got " + json_kind(value));
    } else {
      out[key] = value;
    }
  }
  return out;
}

std::string iso_compiler() {
#if defined(__clang__)
  return std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  return std::string("gcc ") + __VERSION__;
#else
  return "unknown";
#endif
}

std::string eigen_version() {
  return std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
         std::to_string(EIGEN_MINOR_VERSION);
}

std::map<std::string, double> config_thresholds(const ExperimentConfig& cfg) {
  std::map<std::string, double> out;
  if (cfg.params.contains("thresholds"))
    for (const auto& [k, v] : cfg.params.at("thresholds").items()) out[k] = v.get<double>();
  return out;
}

Json reports_json(const ExperimentConfig& cfg, const std::string& hash, const std::vector<DiagnosticsReport>& reps,
                  const std::vector<ReplicaFailure>& failures) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["experiment"] = cfg.experiment;
  j["config_hash"] = hash;
  Json arr = Json::array();
  bool all = !reps.empty();
  for (const auto& r : reps) {
    arr.push_back(r.to_json());
    all = all && r.pass();
  }
  j["reports"] = arr;
  j["failed_replicas"] = failures.size();
  j["pass"] = all && failures.empty();
  return j;
}

std::string summary_csv(const std::vector<DiagnosticsReport>& reps) {
  std::ostringstream os;
  os << std::setprecision(17) << "report,field,name,value\n";
  for (const auto& r : reps) {
    for (const auto& [k, v] : r.statistics) os << r.name << ",statistic," << k << ',' << v << '\n';
    for (const auto& [k, v] : r.thresholds) os << r.name << ",threshold," << k << ',' << v << '\n';
    for (const auto& [k, v] : r.passes) os << r.name << ",pass," << k << ',' << (v ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string config_hash(const ExperimentConfig& cfg) { return artifacts::sha256_hex(cfg.to_json().dump()); }

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int k = 0; k < w; ++k)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

std::vector<DiagnosticsReport> analyze(const Experiment& ex, const Context& ctx,
                                       const std::map<std::string, double>& overrides) {
  fs::create_directories(ctx.figures);
  auto reps = ex.analyze(ctx);
  apply_thresholds(reps, config_thresholds(ctx.cfg));
  apply_thresholds(reps, overrides);
  artifacts::render_figures(ctx.figures);
  return reps;
}

}  // namespace

// ---- config ------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("", "config must be a JSON object");
  static const std::vector<std::string> allowed{"experiment", "N", "beta", "seeds", "t_window", "params", "output_dir"};
  for (const auto& [key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) throw ValidationError(key, "unknown key");
  for (const char* req : {"experiment", "N", "beta", "seeds"})
    if (!j.contains(req)) throw ValidationError(req, "required field missing");

  ExperimentConfig c;
  if (!j.at("experiment").is_string()) throw ValidationError("experiment", "must be a string");
  c.experiment = j.at("experiment").get<std::string>();
  const Experiment& ex = detail::find_experiment(c.experiment);

  if (!j.at("N").is_number_integer() || j.at("N").get<long>() < 2 || j.at("N").get<long>() > 100000)
    throw ValidationError("N", "must be an integer in [2, 100000]");
  c.N = j.at("N").get<int>();
  if (!j.at("beta").is_number()) throw ValidationError("beta", "must be a number");
  c.beta = j.at("beta").get<double>();
  if (!(c.beta >= 1.0 && c.beta <= 16.0)) throw ValidationError("beta", "must lie in [1, 16]");

  const Json& seeds = j.at("seeds");
  if (!seeds.is_array() || seeds.empty()) throw ValidationError("seeds", "must be a nonempty array");
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!seeds[i].is_number_integer() || seeds[i].get<long long>() < 0) throw ValidationError("seeds[" + std::to_string(i) + "]", "must be a nonnegative integer");
    c.seeds.push_back(seeds[i].get<std::uint64_t>());
  }
  std::vector<std::uint64_t> sorted = c.seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ValidationError("seeds", "duplicate seed");

  if (j.contains("t_window")) {
    const Json& w = j.at("t_window");
    if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number())
      throw ValidationError("t_window", "must be [t1, t2]");
    const double a = w[0].get<double>(), b = w[1].get<double>();
    if (!(a >= 0.0 && b > a)) throw ValidationError("t_window", "need 0 <= t1 < t2");
    c.t_window = std::array<double, 2>{a, b};
  }
  c.params = merge_params(ex.defaults, j.value("params", Json::object()), "params", ex.threshold_names);
  if (j.contains("output_dir")) {
    if (!j.at("output_dir").is_string()) throw ValidationError("output_dir", "must be a string");
    c.output_dir = j.at("output_dir").get<std::string>();
  }
  return c;
}

Json ExperimentConfig::to_json() const {
  Json j;
  j["experiment"] = experiment;
  j["N"] = N;
  j["beta"] = beta;
  j["seeds"] = seeds;
  if (t_window) j["t_window"] = {(*t_window)[0], (*t_window)[1]};
  j["params"] = params;
  if (!output_dir.empty()) j["output_dir"] = output_dir;
  return j;
}

std::vector<ExperimentInfo> list_experiments() {
  std::vector<ExperimentInfo> out;
  for (const auto& e : detail::registry()) out.push_back({e.name, e.description});
  return out;
}

Json default_params(const std::string& experiment) { return detail::find_experiment(experiment).defaults; }

void apply_thresholds(std::vector<DiagnosticsReport>& reports, const std::map<std::string, double>& values) {
  if (values.empty()) return;
  for (auto& r : reports) {
    for (const auto& [k, v] : values)
      if (r.thresholds.count(k)) r.thresholds[k] = v;
    r.evaluate();
  }
}

bool RunResult::pass() const {
  return failures.empty() && !reports.empty() &&
         std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.pass(); });
}

int RunResult::exit_code() const {
  if (!failures.empty()) return kExitRuntime;
  return pass() ? kExitPass : kExitCheckFailure;
}

// ---- run ----------------------------------------------------------------------

RunResult run_experiment(const ExperimentConfig& cfg_in, const RunOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = cfg_in;
  const Experiment& ex = detail::find_experiment(cfg.experiment);
  if (!cfg.t_window && ex.default_window) cfg.t_window = ex.default_window(cfg);
  const std::string out = !opt.out_dir.empty() ? opt.out_dir : (!cfg.output_dir.empty() ? cfg.output_dir : "dbm-lab-out");
  const fs::path dir = fs::absolute(out);
  fs::create_directories(dir / "data");
  fs::create_directories(dir / "figures");
  {
    // Stale files would be picked up by hashing and figure rendering.
    for (const char* sub : {"data", "figures"})
      for (const auto& e : fs::directory_iterator(dir / sub)) fs::remove_all(e.path());
  }

  Context ctx{cfg, dir, dir / "figures", opt.workers, {}};
  FileLog log;
  if (ex.prepare) ex.prepare(ctx, log);

  std::vector<ReplicaFailure> failures;
  if (ex.replica) {
    std::vector<std::string> errors(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), opt.workers, [&](std::size_t i) {
      try {
        ex.replica(ctx, cfg.seeds[i], log);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown error";
      }
    });
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
      if (errors[i].empty()) ctx.seeds_ok.push_back(cfg.seeds[i]);
      else failures.push_back({cfg.seeds[i], errors[i]});
    }
    std::sort(ctx.seeds_ok.begin(), ctx.seeds_ok.end());
  } else {
    ctx.seeds_ok = cfg.seeds;
    std::sort(ctx.seeds_ok.begin(), ctx.seeds_ok.end());
  }

  RunResult res;
  res.dir = dir;
  res.failures = failures;
  if (!ctx.seeds_ok.empty()) res.reports = analyze(ex, ctx, {});
  const std::string hash = config_hash(cfg);
  res.report_json = reports_json(cfg, hash, res.reports, failures);
  const std::string report_text = res.report_json.dump(2) + "\n";
  artifacts::write_text(dir / "report.json", report_text);
  artifacts::write_text(dir / "summary.csv", summary_csv(res.reports));

  Json files = Json::array();
  for (const auto& rel : log.files())
    files.push_back({{"path", rel}, {"sha256", artifacts::sha256_file(dir / rel)}, {"bytes", fs::file_size(dir / rel)}});
  Json fails = Json::array();
  for (const auto& f : failures) fails.push_back({{"seed", f.seed}, {"error", f.what}});
  Json m;
  m["schema_version"] = kManifestSchemaVersion;
  m["tool"] = "dbm-lab";
  m["version"] = kToolVersion;
  m["versions"] = {{"eigen", eigen_version()}, {"compiler", iso_compiler()}, {"json", "nlohmann"}};
  m["experiment"] = cfg.experiment;
  m["config"] = cfg.to_json();
  m["config_hash"] = hash;
  m["seeds"] = cfg.seeds;
  m["replicas_ok"] = ctx.seeds_ok;
  m["failures"] = fails;
  m["files"] = files;
  m["report"] = "report.json";
  m["report_sha256"] = artifacts::sha256_hex(report_text);
  m["summary"] = "summary.csv";
  m["workers"] = opt.workers;
  m["runtime_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  artifacts::write_text(dir / "manifest.json", m.dump(2) + "\n");
  return res;
}

RunResult replay(const fs::path& manifest_path, const std::map<std::string, double>& overrides) {
  const Json m = Json::parse(artifacts::read_text(manifest_path));
  if (m.value("schema_version", 0) != kManifestSchemaVersion) throw ValidationError("schema_version", "unsupported manifest");
  const fs::path dir = fs::absolute(manifest_path).parent_path();
  const ExperimentConfig cfg = ExperimentConfig::from_json(m.at("config"));
  if (config_hash(cfg) != m.at("config_hash").get<std::string>()) throw IntegrityError("config hash mismatch");
  for (const auto& f : m.at("files")) {
    const fs::path p = dir / f.at("path").get<std::string>();
    if (!fs::exists(p)) throw IntegrityError("missing data file " + p.string());
    if (fs::file_size(p) != f.at("bytes").get<std::uintmax_t>())
      throw IntegrityError("size mismatch for " + p.string() + " (truncated or modified)");
    if (artifacts::sha256_file(p) != f.at("sha256").get<std::string>())
      throw IntegrityError("hash mismatch for " + p.string());
  }
  const Experiment& ex = detail::find_experiment(cfg.experiment);
  Context ctx{cfg, dir, dir / "replay" / "figures", 1, m.at("replicas_ok").get<std::vector<std::uint64_t>>()};
  std::vector<ReplicaFailure> failures;
  for (const auto& f : m.at("failures")) failures.push_back({f.at("seed").get<std::uint64_t>(), f.at("error")});

  RunResult res;
  res.dir = dir;
  res.failures = failures;
  fs::create_directories(dir / "replay");
  // Figures are regenerated from the stored CSV alone before analysis writes new ones.
  artifacts::render_figures(dir / "figures");
  if (!ctx.seeds_ok.empty()) res.reports = analyze(ex, ctx, overrides);
  res.report_json = reports_json(cfg, m.at("config_hash"), res.reports, failures);
  const std::string text = res.report_json.dump(2) + "\n";
  artifacts::write_text(dir / "replay" / "report.json", text);
  if (overrides.empty() && artifacts::sha256_hex(text) != m.at("report_sha256").get<std::string>())
    throw IntegrityError("replayed report differs from the stored report");
  return res;
}

}  // namespace dbm::cli
