#include "dbmlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dbm {

namespace {

double fraction_at_most(const std::vector<double>& v, double thr) {
  if (v.empty()) return 0.0;
  const auto ok = std::count_if(v.begin(), v.end(), [&](double x) { return std::isfinite(x) && x <= thr; });
  return static_cast<double>(ok) / static_cast<double>(v.size());
}

const char* kind_name(PassRule::Kind k) {
  switch (k) {
    case PassRule::Kind::AtMost: return "at_most";
    case PassRule::Kind::AtLeast: return "at_least";
    case PassRule::Kind::FractionAtMost: return "fraction_at_most";
  }
  return "?";
}

PassRule::Kind kind_from(const std::string& s) {
  if (s == "at_most") return PassRule::Kind::AtMost;
  if (s == "at_least") return PassRule::Kind::AtLeast;
  if (s == "fraction_at_most") return PassRule::Kind::FractionAtMost;
  throw ValidationError("rules.kind", "unknown rule kind '" + s + "'");
}

double lookup(const std::map<std::string, double>& m, const std::string& key, const std::string& what) {
  const auto it = m.find(key);
  if (it == m.end()) throw ValidationError(what, "missing entry '" + key + "'");
  return it->second;
}

Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

double from_json_number(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

// ---- report -------------------------------------------------------------------

void DiagnosticsReport::evaluate() {
  passes.clear();
  for (const auto& r : rules) {
    const double thr = lookup(thresholds, r.threshold, "thresholds");
    bool ok = false;
    switch (r.kind) {
      case PassRule::Kind::AtMost: {
        const double s = lookup(statistics, r.statistic, "statistics");
        ok = std::isfinite(s) && s <= thr;
        break;
      }
      case PassRule::Kind::AtLeast: {
        const double s = lookup(statistics, r.statistic, "statistics");
        ok = std::isfinite(s) && s >= thr;
        break;
      }
      case PassRule::Kind::FractionAtMost: {
        const auto it = series.find(r.statistic);
        if (it == series.end()) throw ValidationError("series", "missing entry '" + r.statistic + "'");
        const double f = fraction_at_most(it->second, thr);
        statistics[r.statistic + "_fraction"] = f;
        ok = f >= lookup(thresholds, r.fraction_threshold, "thresholds");
        break;
      }
    }
    // Several rules may share a flag; all must hold.
    auto [pos, inserted] = passes.emplace(r.flag, ok);
    if (!inserted) pos->second = pos->second && ok;
  }
}

bool DiagnosticsReport::pass() const {
  return !passes.empty() && std::all_of(passes.begin(), passes.end(), [](const auto& p) { return p.second; });
}

Json DiagnosticsReport::to_json() const {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["name"] = name;
  j["manifest"] = manifest;
  j["replicas"] = replicas;
  Json stats = Json::object();
  for (const auto& [k, v] : statistics) stats[k] = finite_or_null(v);
  j["statistics"] = stats;
  Json ser = Json::object();
  for (const auto& [k, v] : series) {
    Json a = Json::array();
    for (double x : v) a.push_back(finite_or_null(x));
    ser[k] = a;
  }
  j["series"] = ser;
  j["thresholds"] = thresholds;
  Json rl = Json::array();
  for (const auto& r : rules) {
    Json e{{"flag", r.flag}, {"kind", kind_name(r.kind)}, {"statistic", r.statistic}, {"threshold", r.threshold}};
    if (r.kind == PassRule::Kind::FractionAtMost) e["fraction_threshold"] = r.fraction_threshold;
    rl.push_back(e);
  }
  j["rules"] = rl;
  j["passes"] = passes;
  j["pass"] = pass();
  return j;
}

DiagnosticsReport DiagnosticsReport::from_json(const Json& j) {
  if (j.value("schema_version", 0) != kReportSchemaVersion)
    throw ValidationError("schema_version", "unsupported report schema");
  DiagnosticsReport r;
  r.name = j.at("name").get<std::string>();
  r.manifest = j.value("manifest", Json::object());
  r.replicas = j.value("replicas", 0L);
  for (const auto& [k, v] : j.at("statistics").items()) r.statistics[k] = from_json_number(v);
  for (const auto& [k, v] : j.at("series").items()) {
    std::vector<double> s;
    for (const auto& x : v) s.push_back(from_json_number(x));
    r.series[k] = std::move(s);
  }
  r.thresholds = j.at("thresholds").get<std::map<std::string, double>>();
  for (const auto& e : j.at("rules")) {
    PassRule p;
    p.flag = e.at("flag");
    p.kind = kind_from(e.at("kind"));
    p.statistic = e.at("statistic");
    p.threshold = e.at("threshold");
    p.fraction_threshold = e.value("fraction_threshold", std::string{});
    r.rules.push_back(p);
  }
  r.passes = j.at("passes").get<std::map<std::string, bool>>();
  return r;
}

// ---- statistics helpers -------------------------------------------------------

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InsufficientData("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, k = 0;
  double d = 0.0;
  while (i < a.size() && k < b.size()) {
    const double x = std::min(a[i], b[k]);
    while (i < a.size() && a[i] <= x) ++i;
    while (k < b.size() && b[k] <= x) ++k;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(k) / nb));
  }
  return d;
}

double ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf) {
  if (a.empty()) throw InsufficientData("ks_one_sample: empty sample");
  std::sort(a.begin(), a.end());
  const double n = static_cast<double>(a.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double F = cdf(a[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  return d;
}

LinearFit ols(const Vec& x, const Vec& y) {
  if (x.size() != y.size() || x.size() < 3) throw InsufficientData("ols: need at least 3 points");
  const double n = static_cast<double>(x.size());
  const double mx = x.mean(), my = y.mean();
  const Vec dx = x.array() - mx;
  const Vec dy = y.array() - my;
  const double sxx = dx.squaredNorm();
  if (sxx <= 0.0) throw InsufficientData("ols: degenerate abscissae");
  LinearFit f;
  f.slope = dx.dot(dy) / sxx;
  f.intercept = my - f.slope * mx;
  const double rss = (dy - f.slope * dx).squaredNorm();
  f.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
  f.n = x.size();
  return f;
}

double bump(double u) {
  if (std::abs(u) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

// ---- rigidity -------------------------------------------------------------------

int match_labeling(const Vec& lambda, const Vec& gamma, IndexRange window) {
  const int N = static_cast<int>(lambda.size());
  if (N < 2 || gamma.size() != lambda.size()) throw ValidationError("gamma", "size must match lambda");
  if (window.hi < window.lo) window = {0, N - 1};
  if (window.lo < 0 || window.hi >= N) throw DomainError("match_labeling: window outside the configuration");
  const int max_shift = N / 10;
  double best = std::numeric_limits<double>::infinity();
  int best_shift = 0;
  for (int s = -max_shift; s <= max_shift; ++s) {
    if (window.lo + s < 0 || window.hi + s >= N) continue;
    double acc = 0.0;
    bool usable = true;
    for (int i = window.lo; i <= window.hi && usable; ++i) {
      const double g = gamma[i + s];
      if (!std::isfinite(g)) usable = false;
      acc += std::abs(lambda[i] - g);
    }
    // Ties go to the smallest |shift|, then the negative one.
    if (usable && (acc < best || (acc == best && std::abs(s) < std::abs(best_shift)))) {
      best = acc;
      best_shift = s;
    }
  }
  const double mean_dev = best / (window.hi - window.lo + 1);
  if (!(mean_dev <= 10.0 * std::log(static_cast<double>(N)) / N))
    throw DomainError("no-labeling: mean deviation " + std::to_string(mean_dev) + " exceeds 10 log N / N");
  return best_shift;
}

namespace {

// Full-length gamma at time t, NaN where the path has no row.
Vec path_gamma(const QuantilePath& qp, int N, double t) {
  Vec g = Vec::Constant(N, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index r = 0; r < qp.indices.size(); ++r) {
    const int k = qp.indices[r];
    if (k >= 1 && k <= N) g[k - 1] = qp.at(r, t);
  }
  return g;
}

// Row of label i in a trajectory, or -1.
Eigen::Index row_of(const Trajectory& tr, int label) {
  for (Eigen::Index r = 0; r < tr.labels.size(); ++r)
    if (tr.labels[r] == label) return r;
  return -1;
}

// Frame f spread over N slots by label; NaN for particles not stored.
Vec by_label(const Trajectory& tr, Eigen::Index f, int N) {
  Vec x = Vec::Constant(N, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index r = 0; r < tr.labels.size(); ++r)
    if (tr.labels[r] >= 0 && tr.labels[r] < N) x[tr.labels[r]] = tr.frames(r, f);
  return x;
}

}  // namespace

DiagnosticsReport strong_rigidity_check(const std::vector<Trajectory>& trajs, const QuantilePath& qpath,
                                        IndexRange window, double threshold, double fraction) {
  if (trajs.empty()) throw InsufficientData("strong_rigidity_check: no replicas");
  const int N = qpath.N > 0 ? qpath.N : static_cast<int>(trajs.front().particles());
  if (threshold <= 0.0) threshold = 5.0 * std::log(static_cast<double>(N));
  if (window.hi < window.lo) window = {0, N - 1};

  DiagnosticsReport rep;
  rep.name = "strong-rigidity";
  rep.replicas = static_cast<long>(trajs.size());
  std::vector<double> sup(trajs.size()), shifts(trajs.size());
  Json seeds = Json::array();
  for (std::size_t r = 0; r < trajs.size(); ++r) {
    const Trajectory& tr = trajs[r];
    seeds.push_back(tr.seed);
    std::vector<Eigen::Index> rows;
    for (int i = window.lo; i <= window.hi; ++i) {
      rows.push_back(row_of(tr, i));
      if (rows.back() < 0) throw ValidationError("trajectories", "label " + std::to_string(i) + " missing");
    }
    int shift = 0;
    try {
      shift = match_labeling(by_label(tr, 0, N), path_gamma(qpath, N, tr.times[0]), window);
    } catch (const DomainError&) {
      sup[r] = std::numeric_limits<double>::infinity();
      shifts[r] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    shifts[r] = shift;
    double worst = 0.0;
    for (Eigen::Index f = 0; f < tr.frame_count(); ++f) {
      const Vec g = path_gamma(qpath, N, tr.times[f]);
      for (int i = window.lo; i <= window.hi; ++i) {
        const double gi = g[i + shift];
        if (!std::isfinite(gi))
          throw DomainError("strong_rigidity_check: quantile path lacks index " + std::to_string(i + shift + 1));
        worst = std::max(worst, N * std::abs(tr.frames(rows[i - window.lo], f) - gi));
      }
    }
    sup[r] = worst;
  }
  rep.series["sup_deviation"] = sup;
  rep.series["labeling_shift"] = shifts;
  rep.statistics["max_sup_deviation"] = *std::max_element(sup.begin(), sup.end());
  rep.thresholds["deviation"] = threshold;
  rep.thresholds["fraction"] = fraction;
  rep.rules.push_back({"rigid", PassRule::Kind::FractionAtMost, "sup_deviation", "deviation", "fraction"});
  const Trajectory& t0 = trajs.front();
  rep.manifest = {{"seeds", seeds},
                  {"N", N},
                  {"beta", t0.beta},
                  {"t_window", {t0.times[0], t0.times[t0.times.size() - 1]}},
                  {"window", {window.lo, window.hi}}};
  rep.evaluate();
  return rep;
}

DiagnosticsReport weak_rigidity_check(const Trajectory& traj, const std::function<Measure1D(double)>& rho_at,
                                      double E_star, IndexRange I_sigma, double delta_threshold) {
  const int N = static_cast<int>(traj.particles());
  if (I_sigma.hi < I_sigma.lo || I_sigma.lo < 0 || I_sigma.hi >= N)
    throw ValidationError("I_sigma", "excluded index set must be a nonempty range inside the system");
  const bool exterior_empty = I_sigma.lo == 0 && I_sigma.hi == N - 1;

  DiagnosticsReport rep;
  rep.name = "weak-rigidity";
  rep.replicas = 1;
  std::vector<double> per_time;
  for (Eigen::Index f = 0; f < traj.frame_count(); ++f) {
    const double t = traj.times[f];
    const Measure1D rho = rho_at(t);
    const double a = I_sigma.lo == 0 ? rho.support_lo() : quantiles(rho, N, I_sigma.lo).value;
    const double b = quantiles(rho, N, I_sigma.hi + 1).value;
    if (!(E_star > a && E_star < b))
      throw DomainError("weak_rigidity_check: E* lies outside the excluded interval I(t)");
    const auto kernel = [E_star](double x) { return 1.0 / (x - E_star); };
    const double lo = rho.support_lo() - 1.0, hi = rho.support_hi() + 1.0;
    double integral = 0.0;
    if (a > lo) integral += rho.integrate(kernel, lo, a);
    if (hi > b) integral += rho.integrate(kernel, b, hi);
    double sum = 0.0;
    for (int k = 0; k < N; ++k)
      if (!I_sigma.contains(k)) sum += 1.0 / (traj.frames(k, f) - E_star);
    per_time.push_back(std::abs(sum / N - integral));
  }
  rep.series["deviation"] = per_time;
  rep.statistics["max_deviation"] = *std::max_element(per_time.begin(), per_time.end());
  rep.statistics["exterior_nonempty"] = exterior_empty ? 0.0 : 1.0;
  rep.thresholds["delta"] = delta_threshold;
  rep.thresholds["exterior_required"] = 1.0;
  rep.rules.push_back({"weakly_rigid", PassRule::Kind::AtMost, "max_deviation", "delta", ""});
  rep.rules.push_back({"configuration", PassRule::Kind::AtLeast, "exterior_nonempty", "exterior_required", ""});
  rep.manifest = {{"seeds", {traj.seed}},
                  {"N", N},
                  {"beta", traj.beta},
                  {"t_window", {traj.times[0], traj.times[traj.times.size() - 1]}},
                  {"E_star", E_star},
                  {"I_sigma", {I_sigma.lo, I_sigma.hi}}};
  rep.evaluate();
  return rep;
}

// ---- gaps -------------------------------------------------------------------------

Vec GapSample::pooled() const {
  Vec out(gaps.size());
  Eigen::Map<Eigen::MatrixXd>(out.data(), gaps.rows(), gaps.cols()) = gaps;
  return out;
}

void GapSample::append(const GapSample& o) {
  if (gaps.size() == 0) {
    *this = o;
    return;
  }
  if (o.gaps.cols() != gaps.cols()) throw ValidationError("gaps", "gap vectors of different length");
  Eigen::MatrixXd g(gaps.rows() + o.gaps.rows(), gaps.cols());
  g << gaps, o.gaps;
  Eigen::VectorXi i(i0.size() + o.i0.size());
  i << i0, o.i0;
  Vec r(rho_star.size() + o.rho_star.size());
  r << rho_star, o.rho_star;
  gaps = std::move(g);
  i0 = std::move(i);
  rho_star = std::move(r);
}

GapSample gap_statistics(const std::vector<Vec>& spectra, int i0, int n, double rho_star, double T) {
  return gap_statistics(spectra, std::vector<int>{i0}, n, Vec::Constant(1, rho_star), T);
}

GapSample gap_statistics(const std::vector<Vec>& spectra, const std::vector<int>& i0s, int n, const Vec& rho_stars,
                         double T) {
  if (spectra.empty()) throw InsufficientData("gap_statistics: no spectra");
  if (n < 1) throw ValidationError("n", "need at least one gap");
  if (static_cast<Eigen::Index>(i0s.size()) != rho_stars.size())
    throw ValidationError("rho_star", "one density per center index");
  const int N = static_cast<int>(spectra.front().size());
  // Bulk: the middle 90% of indices.
  const int edge = N / 20;
  for (std::size_t c = 0; c < i0s.size(); ++c) {
    if (i0s[c] < edge || i0s[c] + n > N - 1 - edge)
      throw DomainError("gap_statistics: indices " + std::to_string(i0s[c]) + ".." + std::to_string(i0s[c] + n) +
                        " leave the bulk");
    if (!(rho_stars[c] > 0.0)) throw ValidationError("rho_star", "must be positive");
  }
  GapSample s;
  s.N = N;
  s.T = T;
  const Eigen::Index rows = static_cast<Eigen::Index>(spectra.size() * i0s.size());
  s.gaps.resize(rows, n);
  s.i0.resize(rows);
  s.rho_star.resize(rows);
  Eigen::Index r = 0;
  for (const Vec& lam : spectra) {
    if (lam.size() != N) throw ValidationError("spectra", "spectra must share N");
    for (std::size_t c = 0; c < i0s.size(); ++c, ++r) {
      for (int j = 1; j <= n; ++j) {
        const double g = lam[i0s[c] + j] - lam[i0s[c] + j - 1];
        if (g < 0.0) throw ValidationError("spectra", "spectrum not sorted");
        s.gaps(r, j - 1) = N * rho_stars[c] * g;
      }
      s.i0[r] = i0s[c];
      s.rho_star[r] = rho_stars[c];
    }
  }
  return s;
}

Vec ObservableBattery::evaluate(const GapSample& s) const {
  const auto nc = static_cast<Eigen::Index>(centers.size());
  const bool two = s.gaps.cols() >= 2;
  Vec out = Vec::Zero(two ? 2 * nc : nc);
  if (s.size() == 0) return out;
  for (Eigen::Index r = 0; r < s.size(); ++r) {
    for (Eigen::Index c = 0; c < nc; ++c) {
      const double p1 = bump((s.gaps(r, 0) - centers[c]) / width);
      out[c] += p1;
      if (two) out[nc + c] += p1 * bump((s.gaps(r, 1) - centers[c]) / width);
    }
  }
  return out / static_cast<double>(s.size());
}

DiagnosticsReport compare_gap_laws(const GapSample& a, const GapSample& b, double ks_factor, double observable_tol) {
  if (a.size() == 0 || b.size() == 0) throw InsufficientData("compare_gap_laws: empty sample");
  DiagnosticsReport rep;
  rep.name = "gap-universality";
  rep.replicas = static_cast<long>(a.size() + b.size());
  const Vec fa = a.first_gaps(), fb = b.first_gaps();
  const double ks = ks_two_sample({fa.data(), fa.data() + fa.size()}, {fb.data(), fb.data() + fb.size()});
  const double na = static_cast<double>(fa.size()), nb = static_cast<double>(fb.size());
  ObservableBattery battery;
  const Vec oa = battery.evaluate(a), ob = battery.evaluate(b);
  const Eigen::Index m = std::min(oa.size(), ob.size());
  const Vec diff = (oa.head(m) - ob.head(m)).cwiseAbs();
  rep.statistics["ks_first_gap"] = ks;
  rep.statistics["ks_bound95"] = ks_bound95(na, nb);
  rep.statistics["ks_ratio"] = ks / ks_bound95(na, nb);
  rep.statistics["observable_max_diff"] = diff.maxCoeff();
  rep.statistics["observable_mean_diff"] = diff.mean();
  rep.statistics["mean_gap_a"] = fa.mean();
  rep.statistics["mean_gap_b"] = fb.mean();
  rep.series["observables_a"] = {oa.data(), oa.data() + oa.size()};
  rep.series["observables_b"] = {ob.data(), ob.data() + ob.size()};
  rep.thresholds["ks_factor"] = ks_factor;
  rep.thresholds["observable_tol"] = observable_tol;
  rep.rules.push_back({"ks", PassRule::Kind::AtMost, "ks_ratio", "ks_factor", ""});
  rep.rules.push_back({"observables", PassRule::Kind::AtMost, "observable_max_diff", "observable_tol", ""});
  rep.manifest = {{"n_a", fa.size()}, {"n_b", fb.size()}, {"N", a.N}, {"T_a", a.T}, {"T_b", b.T},
                  {"battery_centers", battery.centers}, {"battery_width", battery.width}};
  rep.evaluate();
  return rep;
}

DiagnosticsReport level_repulsion_fit(const Vec& rescaled_gaps, double beta, double u_max, double band) {
  if (!(u_max > 0.0 && u_max <= 0.5)) throw ValidationError("u_max", "must lie in (0, 0.5]");
  const auto n = rescaled_gaps.size();
  std::vector<double> small;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rescaled_gaps[i] < 0.0) throw ValidationError("gaps", "negative gap");
    if (rescaled_gaps[i] > 0.0 && rescaled_gaps[i] <= u_max) small.push_back(rescaled_gaps[i]);
  }
  if (small.size() < 100)
    throw InsufficientData("level_repulsion_fit: " + std::to_string(small.size()) + " gaps below u_max, need 100");
  std::sort(small.begin(), small.end());
  const auto m = static_cast<Eigen::Index>(small.size());
  Vec x(m), y(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    x[k] = std::log(small[k]);
    y[k] = std::log(static_cast<double>(k + 1) / static_cast<double>(n));
  }
  const LinearFit f = ols(x, y);
  // Hill-type MLE for a power law F(u) ~ u^a on (0, u_max].
  double sl = 0.0;
  for (double s : small) sl += std::log(u_max / s);
  const double mle = static_cast<double>(m) / sl;

  DiagnosticsReport rep;
  rep.name = "level-repulsion";
  rep.replicas = 1;
  rep.statistics["slope"] = f.slope;
  rep.statistics["slope_ci_lo"] = f.slope - 1.96 * f.slope_se;
  rep.statistics["slope_ci_hi"] = f.slope + 1.96 * f.slope_se;
  rep.statistics["slope_mle"] = mle;
  rep.statistics["slope_mle_se"] = mle / std::sqrt(static_cast<double>(m));
  rep.statistics["small_gaps"] = static_cast<double>(m);
  rep.statistics["gaps"] = static_cast<double>(n);
  rep.statistics["slope_error"] = std::abs(f.slope - (beta + 1.0));
  rep.thresholds["band"] = band;
  rep.rules.push_back({"repulsion", PassRule::Kind::AtMost, "slope_error", "band", ""});
  rep.manifest = {{"beta", beta}, {"u_max", u_max}, {"gaps", n}};
  rep.evaluate();
  return rep;
}

// ---- coupling dynamics ----------------------------------------------------------------

namespace {

// sup over recorded t <= theta and dyadic M of the averaged kernel mass around Z.
double regularity_statistic(const CouplingCoefficients& c, int Z, double theta, double* argmax_t = nullptr) {
  const Eigen::Index F = c.frame_count();
  const int n = c.window.size();
  const double N = c.window.N;
  Eigen::Index last = -1;
  for (Eigen::Index f = 0; f < F; ++f)
    if (c.times[f] <= theta + 1e-12) last = f;
  if (last < 1) throw InsufficientData("regularity_average: fewer than two records before theta");

  double best = 0.0;
  for (int M = 1; M <= std::max(1, c.window.K); M *= 2) {
    const int lo = std::max(0, Z - M), hi = std::min(n - 1, Z + M);
    // Ball mass per frame, then a trapezoid tail integral to theta.
    Vec mass(last + 1);
    for (Eigen::Index f = 0; f <= last; ++f)
      mass[f] = c.B[f].block(lo, lo, hi - lo + 1, hi - lo + 1).cwiseAbs().sum() / M;
    const double theta_eff = std::min(theta, c.times[last]);
    double tail = 0.0;
    for (Eigen::Index f = last - 1; f >= 0; --f) {
      tail += 0.5 * (mass[f] + mass[f + 1]) * (c.times[f + 1] - c.times[f]);
      const double val = tail / (1.0 / N + std::abs(theta_eff - c.times[f]));
      if (val > best) {
        best = val;
        if (argmax_t) *argmax_t = c.times[f];
      }
    }
  }
  return best;
}

DiagnosticsReport regularity_report(const std::string& name, double stat, double N, double rho_threshold) {
  DiagnosticsReport rep;
  rep.name = name;
  rep.replicas = 1;
  rep.statistics["statistic"] = stat;
  rep.statistics["rho_hat"] = stat > 0.0 ? std::log(stat / N) / std::log(N) : -std::numeric_limits<double>::infinity();
  rep.thresholds["rho"] = rho_threshold;
  rep.rules.push_back({"regular", PassRule::Kind::AtMost, "rho_hat", "rho", ""});
  return rep;
}

}  // namespace

DiagnosticsReport regularity_average(const CouplingCoefficients& c, int Z, double theta, double rho_threshold) {
  if (Z < 0 || Z >= c.window.size()) throw DomainError("regularity_average: Z outside the window");
  double at = 0.0;
  const double stat = regularity_statistic(c, Z, theta, &at);
  DiagnosticsReport rep = regularity_report("regularity-average", stat, c.window.N, rho_threshold);
  // A zero kernel gives rho_hat = -inf; keep the pass flag meaningful.
  if (stat == 0.0) rep.statistics["rho_hat"] = -1.0e300;
  rep.statistics["argmax_t"] = at;
  rep.manifest = {{"N", c.window.N}, {"K", c.window.K}, {"Z", Z}, {"theta", theta}, {"T1p", c.T1p}};
  rep.evaluate();
  return rep;
}

DiagnosticsReport strong_regularity(const CouplingCoefficients& c, int Z, double theta, double rho_threshold) {
  if (Z < 0 || Z >= c.window.size()) throw DomainError("strong_regularity: Z outside the window");
  const double N = c.window.N, K = c.window.K;
  std::vector<double> stats, points;
  for (int m = 0; m < 30; ++m) {
    for (int k = 0; k < 30; ++k) {
      const double w = -(K / N) * std::ldexp(1.0, -m) * (1.0 + std::ldexp(1.0, -k));
      const double th = theta + w;
      if (th <= c.T1p || th < c.times[0]) continue;
      try {
        stats.push_back(regularity_statistic(c, Z, th));
        points.push_back(th);
      } catch (const InsufficientData&) {
      }
    }
  }
  if (stats.empty()) throw InsufficientData("strong_regularity: no admissible points in theta + Omega");
  const double worst = *std::max_element(stats.begin(), stats.end());
  DiagnosticsReport rep = regularity_report("strong-regularity", worst, N, rho_threshold);
  if (worst == 0.0) rep.statistics["rho_hat"] = -1.0e300;
  rep.series["statistic"] = stats;
  rep.series["theta"] = points;
  rep.manifest = {{"N", c.window.N}, {"K", c.window.K}, {"Z", Z}, {"theta", theta}, {"T1p", c.T1p}};
  rep.evaluate();
  return rep;
}

DiagnosticsReport finite_speed_check(const CouplingCoefficients& c, int j, double s, double t_end, double dt,
                                     double C_threshold, int record_every) {
  const int n = c.window.size();
  if (j < 0 || j >= n) throw DomainError("finite_speed_check: source outside the window");
  Vec e = Vec::Zero(n);
  e[j] = 1.0;
  const VectorPath U = evolve_parabolic(c, e, false, s, t_end, dt, record_every);
  const double N = c.window.N;
  const double sqrtK = std::sqrt(static_cast<double>(c.window.K));
  double worst = 0.0;
  std::vector<double> per_time;
  for (Eigen::Index f = 0; f < U.times.size(); ++f) {
    const double scale = sqrtK * std::sqrt(N * (U.times[f] - s) + 1.0);
    double m = 0.0;
    for (int i = 0; i < n; ++i)
      if (i != j) m = std::max(m, std::abs(U.values(i, f)) * std::abs(i - j) / scale);
    per_time.push_back(m);
    worst = std::max(worst, m);
  }
  DiagnosticsReport rep;
  rep.name = "finite-speed";
  rep.replicas = 1;
  rep.series["max_ratio_per_time"] = per_time;
  rep.statistics["max_ratio"] = worst;
  rep.statistics["mass_end"] = U.values.col(U.values.cols() - 1).sum();
  rep.thresholds["C"] = C_threshold;
  rep.rules.push_back({"finite_speed", PassRule::Kind::AtMost, "max_ratio", "C", ""});
  rep.manifest = {{"N", c.window.N}, {"K", c.window.K}, {"j", j}, {"s", s}, {"t_end", t_end}, {"dt", dt}};
  rep.evaluate();
  return rep;
}

DiagnosticsReport persistent_trailing_check(const std::vector<Trajectory>& trajs, const QuantilePath& qpath, int L,
                                            double t1, double t2, double start_tolerance, double fraction) {
  if (trajs.empty()) throw InsufficientData("persistent_trailing_check: no replicas");
  if (!(t2 > t1)) throw ValidationError("t_span", "t2 must exceed t1");
  const int N = qpath.N > 0 ? qpath.N : static_cast<int>(trajs.front().particles());
  const double logN = std::log(static_cast<double>(N));
  if (start_tolerance <= 0.0) start_tolerance = 5.0 * logN / N;
  const double noise_scale = std::sqrt((t2 - t1) / N);

  std::vector<double> sup(trajs.size()), ratio(trajs.size());
  Json seeds = Json::array();
  for (std::size_t r = 0; r < trajs.size(); ++r) {
    const Trajectory& tr = trajs[r];
    seeds.push_back(tr.seed);
    const Eigen::Index row = row_of(tr, L);
    if (row < 0) throw ValidationError("L", "label not present in trajectory");
    const Eigen::Index f1 = tr.nearest_frame(t1), f2 = tr.nearest_frame(t2);
    const int window_half = std::max(1, N / 20);
    const IndexRange around{std::max(0, L - window_half), std::min(N - 1, L + window_half)};
    const int shift = match_labeling(by_label(tr, f1, N), path_gamma(qpath, N, tr.times[f1]), around);
    const int k = L + shift;
    Eigen::Index qrow = -1;
    for (Eigen::Index q = 0; q < qpath.indices.size(); ++q)
      if (qpath.indices[q] == k + 1) qrow = q;
    if (qrow < 0) throw DomainError("persistent_trailing_check: quantile path lacks index " + std::to_string(k + 1));
    const double x1 = tr.frames(row, f1);
    if (std::abs(x1 - qpath.at(qrow, tr.times[f1])) > start_tolerance)
      throw DomainError("precondition: replica " + std::to_string(tr.replica) +
                        " starts farther than the tolerance from its quantile");
    double s = 0.0, fl = 0.0;
    for (Eigen::Index f = f1; f <= f2; ++f) {
      s = std::max(s, N * std::abs(tr.frames(row, f) - qpath.at(qrow, tr.times[f])));
      fl = std::max(fl, std::abs(tr.frames(row, f) - x1));
    }
    sup[r] = s;
    ratio[r] = fl / noise_scale;
  }
  // Joint per-replica pass: both bounds must hold for the same replica.
  const double sup_thr = 5.0 * logN * logN;
  std::vector<double> joint(trajs.size());
  for (std::size_t r = 0; r < trajs.size(); ++r) joint[r] = (sup[r] <= sup_thr && ratio[r] <= 0.5) ? 0.0 : 1.0;

  DiagnosticsReport rep;
  rep.name = "persistent-trailing";
  rep.replicas = static_cast<long>(trajs.size());
  rep.series["sup_deviation"] = sup;
  rep.series["noise_ratio"] = ratio;
  rep.series["violation"] = joint;
  rep.statistics["median_noise_ratio"] = [&] {
    std::vector<double> v = ratio;
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  }();
  rep.statistics["max_sup_deviation"] = *std::max_element(sup.begin(), sup.end());
  rep.thresholds["sup"] = sup_thr;
  rep.thresholds["ratio"] = 0.5;
  rep.thresholds["fraction"] = fraction;
  rep.thresholds["violation"] = 0.0;
  rep.rules.push_back({"trailing", PassRule::Kind::FractionAtMost, "sup_deviation", "sup", "fraction"});
  rep.rules.push_back({"suppressed", PassRule::Kind::FractionAtMost, "noise_ratio", "ratio", "fraction"});
  rep.rules.push_back({"joint", PassRule::Kind::FractionAtMost, "violation", "violation", "fraction"});
  rep.manifest = {{"seeds", seeds}, {"N", N}, {"beta", trajs.front().beta}, {"t_window", {t1, t2}}, {"L", L}};
  rep.evaluate();
  return rep;
}

FlatteningSample gap_flattening(const Trajectory& hat, const Trajectory& tilde, int N, int L, double T1p,
                                double T1pp, int C, bool allow_uncoupled) {
  if ((hat.seed != tilde.seed || hat.replica != tilde.replica) && !allow_uncoupled)
    throw ValidationError("coupling", "trajectories are not driven by the same noise (seed or replica differs)");
  const auto stat = [&](double t) {
    const Vec a = hat.at(t), b = tilde.at(t);
    double m = 0.0;
    for (int i = L - C; i <= L + C; ++i) {
      const Eigen::Index ra = row_of(hat, i), ra1 = row_of(hat, i + 1);
      const Eigen::Index rb = row_of(tilde, i), rb1 = row_of(tilde, i + 1);
      if (ra < 0 || ra1 < 0 || rb < 0 || rb1 < 0) continue;
      m = std::max(m, std::abs((a[ra1] - a[ra]) - (b[rb1] - b[rb])));
    }
    return N * m;
  };
  return {stat(T1p), stat(T1pp)};
}

DiagnosticsReport gap_flattening_check(const std::vector<FlatteningSample>& samples, double fraction) {
  if (samples.empty()) throw InsufficientData("gap_flattening_check: no replicas");
  std::vector<double> ratio, before, after;
  for (const auto& s : samples) {
    before.push_back(s.before);
    after.push_back(s.after);
    ratio.push_back(s.before > 0.0 ? s.after / s.before : (s.after == 0.0 ? 0.0 : 1.0e300));
  }
  DiagnosticsReport rep;
  rep.name = "gap-flattening";
  rep.replicas = static_cast<long>(samples.size());
  rep.series["before"] = before;
  rep.series["after"] = after;
  rep.series["ratio"] = ratio;
  rep.thresholds["ratio"] = 0.5;
  rep.thresholds["fraction"] = fraction;
  rep.rules.push_back({"flattens", PassRule::Kind::FractionAtMost, "ratio", "ratio", "fraction"});
  rep.evaluate();
  return rep;
}

}  // namespace dbm
