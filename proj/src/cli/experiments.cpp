#include <algorithm>
#include <cmath>
#include <numbers>

#include "dbmlab/artifacts.hpp"
#include "dbmlab/dbm.hpp"
#include "dbmlab/local_gibbs.hpp"
#include "dbmlab/matrix_flow.hpp"
#include "dbmlab/semicircle.hpp"
#include "dbmlab/semicircular_flow.hpp"
#include "experiment.hpp"

namespace dbm::cli::detail {

namespace {

using artifacts::read_matrix;
using artifacts::write_figure_csv;
using artifacts::write_matrix;
using plots::Series;

std::string seed_file(const std::string& stem, std::uint64_t seed, const std::string& ext) {
  return stem + "_" + std::to_string(seed) + ext;
}

void save_matrix(const Context& c, FileLog& log, const std::string& name, const Eigen::MatrixXd& m) {
  write_matrix(c.data(name), m);
  log.add("data/" + name);
}

void save_trajectory(const Context& c, FileLog& log, const std::string& name, const Trajectory& tr) {
  write_trajectory_binary(c.data(name).string(), tr);
  log.add("data/" + name);
}

Trajectory load_trajectory(const Context& c, const std::string& name) {
  return read_trajectory_binary(c.data(name).string());
}

Vec as_vec(const Eigen::MatrixXd& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

// Path matrix layout: (0,0) = N, row 0 = times, column 0 = 1-based indices.
Eigen::MatrixXd pack_path(const QuantilePath& q) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(q.indices.size() + 1, q.times.size() + 1);
  m(0, 0) = q.N;
  m.block(0, 1, 1, q.times.size()) = q.times.transpose();
  m.block(1, 0, q.indices.size(), 1) = q.indices.cast<double>();
  m.block(1, 1, q.indices.size(), q.times.size()) = q.gamma;
  return m;
}

QuantilePath unpack_path(const Eigen::MatrixXd& m) {
  QuantilePath q;
  q.N = static_cast<int>(m(0, 0));
  q.times = m.block(0, 1, 1, m.cols() - 1).transpose();
  q.indices = m.block(1, 0, m.rows() - 1, 1).cast<int>();
  q.gamma = m.block(1, 1, m.rows() - 1, m.cols() - 1);
  return q;
}

// Semicircle quantile path for 1-based indices lo..hi over [t0, t1].
QuantilePath semicircle_path(int N, int lo, int hi, double t1, int steps) {
  const Eigen::VectorXi idx = Eigen::VectorXi::LinSpaced(hi - lo + 1, lo, hi);
  return quantile_flow(semicircle_measure(2000), N, idx, Vec::LinSpaced(steps, 0.0, t1));
}

int param_L(const Context& c) {
  const int L = c.p().at("L").get<int>();
  return L < 0 ? c.cfg.N / 2 : L;
}

double param_dt(const Context& c) {
  const double dt = c.p().at("dt").get<double>();
  return dt > 0.0 ? dt : 0.1 / c.cfg.N;
}

std::array<double, 2> rigidity_window(const ExperimentConfig& c) { return {0.0, std::pow(c.N, -0.2)}; }

Vec gue_start(const Context& c, std::uint64_t seed) {
  return eigenvalues(gaussian_ensemble(c.cfg.N, symmetry_from_beta(c.cfg.beta), seed));
}

// ---- flow experiments ----------------------------------------------------------

Experiment semicircle_invariance() {
  Experiment e;
  e.name = "semicircle-invariance";
  e.description = "Stieltjes transform of the flowed semicircle against the closed form";
  e.defaults = {{"cells", 800}, {"t_values", {0.1, 1.0, 5.0}}, {"points", 100}, {"eta_min", 1e-3},
                {"eta_max", 1.0}, {"E_max", 3.0}};
  e.threshold_names = {"sup_deviation"};
  e.prepare = [](const Context& c, FileLog& log) {
    const auto& p = c.p();
    const Measure1D sc = semicircle_measure(p.at("cells").get<int>());
    FlowSolverConfig cfg;
    cfg.eta_star = 0.0;
    const int n = p.at("points").get<int>();
    const double emax = p.at("E_max").get<double>(), lo = p.at("eta_min").get<double>(),
                 hi = p.at("eta_max").get<double>();
    const auto ts = p.at("t_values").get<std::vector<double>>();
    if (n < 2) throw ValidationError("params.points", "need at least 2");
    if (!(lo > 0.0 && hi >= lo)) throw ValidationError("params.eta_min", "need 0 < eta_min <= eta_max");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(ts.size()) * n, 5);
    Eigen::Index r = 0;
    for (double t : ts) {
      for (int i = 0; i < n; ++i, ++r) {
        // Energies sweep the axis; heights follow a golden-ratio sequence in log scale.
        const double E = -emax + 2.0 * emax * i / (n - 1);
        const double u = std::fmod(i * 0.6180339887498949, 1.0);
        const double eta = lo * std::pow(hi / lo, u);
        const Complex m = solve_mt(sc, t, {E, eta}, cfg);
        out.row(r) << t, E, eta, m.real(), m.imag();
      }
    }
    save_matrix(c, log, "stieltjes.bin", out);
  };
  e.analyze = [](const Context& c) {
    const Eigen::MatrixXd d = read_matrix(c.data("stieltjes.bin"));
    DiagnosticsReport rep;
    rep.name = "semicircle-invariance";
    std::map<double, Series> lines;
    std::vector<double> dev;
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      const Complex z(d(r, 1), d(r, 2));
      const double err = std::abs(Complex(d(r, 3), d(r, 4)) - semicircle_stieltjes(z, 1.0));
      dev.push_back(err);
      auto& s = lines[d(r, 0)];
      s.label = "t=" + std::to_string(d(r, 0));
      s.x.push_back(d(r, 1));
      s.y.push_back(std::log10(std::max(err, 1e-18)));
    }
    rep.statistics["sup_deviation"] = *std::max_element(dev.begin(), dev.end());
    rep.statistics["points"] = static_cast<double>(d.rows());
    rep.thresholds["sup_deviation"] = 1e-8;
    rep.rules.push_back({"invariant", PassRule::Kind::AtMost, "sup_deviation", "sup_deviation", ""});
    rep.manifest = {{"t_values", c.p().at("t_values")}, {"cells", c.p().at("cells")}};
    rep.evaluate();
    std::vector<Series> fig;
    for (auto& [t, s] : lines) fig.push_back(s);
    write_figure_csv(c.figures / "log10_deviation.lines.csv", fig);
    return std::vector<DiagnosticsReport>{rep};
  };
  return e;
}

Experiment flow_from_atoms() {
  Experiment e;
  e.name = "flow-from-atoms";
  e.description = "Flow of a point mass against the scaled semicircle, plus the Burgers residual";
  e.defaults = {{"atom", 0.0},
                {"t_values", {0.2, std::log(2.0), 2.0}},
                {"grid_points", 801},
                {"bulk_fraction", 0.9},
                {"burgers", {{"t", 0.5}, {"eta", 0.5}, {"dt", 1e-3}, {"dz", 1e-3}, {"points", 41}, {"E_max", 3.0}}}};
  e.threshold_names = {"sup_deviation", "burgers_residual"};
  e.prepare = [](const Context& c, FileLog& log) {
    const auto& p = c.p();
    const double atom = p.at("atom").get<double>();
    const Measure1D d0 = Measure1D::dirac(atom);
    const int n = p.at("grid_points").get<int>();
    const auto ts = p.at("t_values").get<std::vector<double>>();
    // Columns per t: grid, flowed density.
    Eigen::MatrixXd out(n, 2 * ts.size());
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const double t = ts[k];
      if (!(t > 0.0)) throw ValidationError("params.t_values", "times must be positive");
      const double r = 2.0 * std::sqrt(-std::expm1(-t)), mid = std::exp(-t / 2.0) * atom;
      const Vec g = Vec::LinSpaced(n, mid - 1.1 * r, mid + 1.1 * r);
      const Measure1D rho = flow_density(d0, t, g);
      out.col(2 * k) = g;
      for (int i = 0; i < n; ++i) out(i, 2 * k + 1) = rho.density(g[i]);
    }
    save_matrix(c, log, "densities.bin", out);
    const Json& b = p.at("burgers");
    std::vector<Complex> zs;
    const int m = b.at("points").get<int>();
    const double emax = b.at("E_max").get<double>();
    for (int i = 0; i < m; ++i) zs.emplace_back(-emax + 2.0 * emax * i / std::max(1, m - 1), b.at("eta").get<double>());
    FlowSolverConfig cfg;
    cfg.eta_star = 0.0;
    const double res = burgers_residual(d0, b.at("t").get<double>(), b.at("dt").get<double>(), zs, cfg,
                                        b.at("dz").get<double>());
    save_matrix(c, log, "burgers.bin", Eigen::MatrixXd::Constant(1, 1, res));
  };
  e.analyze = [](const Context& c) {
    const auto& p = c.p();
    const Eigen::MatrixXd d = read_matrix(c.data("densities.bin"));
    const auto ts = p.at("t_values").get<std::vector<double>>();
    const double atom = p.at("atom").get<double>(), bulk = p.at("bulk_fraction").get<double>();
    double worst = 0.0;
    std::vector<Series> fig;
    std::vector<double> per_t;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const double s2 = -std::expm1(-ts[k]), r = 2.0 * std::sqrt(s2), mid = std::exp(-ts[k] / 2.0) * atom;
      Series s{"t=" + std::to_string(ts[k]), {}, {}};
      double w = 0.0;
      for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const double x = d(i, 2 * k);
        s.x.push_back(x);
        s.y.push_back(d(i, 2 * k + 1));
        if (std::abs(x - mid) > bulk * r) continue;
        w = std::max(w, std::abs(d(i, 2 * k + 1) - semicircle_density(x - mid, s2)));
      }
      per_t.push_back(w);
      worst = std::max(worst, w);
      fig.push_back(std::move(s));
    }
    write_figure_csv(c.figures / "flowed_density.lines.csv", fig);
    DiagnosticsReport rep;
    rep.name = "flow-from-atoms";
    rep.statistics["sup_deviation"] = worst;
    rep.statistics["burgers_residual"] = read_matrix(c.data("burgers.bin"))(0, 0);
    rep.series["sup_deviation_per_t"] = per_t;
    rep.thresholds["sup_deviation"] = 1e-4;
    rep.thresholds["burgers_residual"] = 1e-3;
    rep.rules.push_back({"semicircle", PassRule::Kind::AtMost, "sup_deviation", "sup_deviation", ""});
    rep.rules.push_back({"burgers", PassRule::Kind::AtMost, "burgers_residual", "burgers_residual", ""});
    rep.manifest = {{"atom", atom}, {"t_values", ts}};
    rep.evaluate();
    return std::vector<DiagnosticsReport>{rep};
  };
  return e;
}

Experiment quantile_consistency() {
  Experiment e;
  e.name = "quantile-consistency";
  e.description = "Quantile ODE paths against quantiles of the flowed density";
  e.defaults = {{"atoms", {-1.0, 1.0}},
                {"weights", {0.5, 0.5}},
                {"indices", Json::array()},
                {"t_steps", 11},
                {"grid_points", 6000},
                {"cdf_correction_interval", 0},
                {"density_floor", 0.0}};
  e.threshold_names = {"max_difference"};
  e.default_window = [](const ExperimentConfig&) { return std::array<double, 2>{0.0, 0.5}; };
  e.prepare = [](const Context& c, FileLog& log) {
    const auto& p = c.p();
    const int N = c.cfg.N;
    const auto at = p.at("atoms").get<std::vector<double>>();
    const auto wt = p.at("weights").get<std::vector<double>>();
    if (at.empty() || at.size() != wt.size()) throw ValidationError("params.weights", "one weight per atom");
    const Measure1D mu = Measure1D::atomic(Eigen::Map<const Vec>(at.data(), at.size()),
                                           Eigen::Map<const Vec>(wt.data(), wt.size()));
    std::vector<int> ids = p.at("indices").get<std::vector<int>>();
    if (ids.empty())
      for (int j = 0; j < 20; ++j) ids.push_back(1 + j * (N / 20) + j % 3);
    Eigen::VectorXi idx(ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (ids[j] < 1 || ids[j] > N) throw ValidationError("params.indices", "indices must lie in 1..N");
      idx[static_cast<Eigen::Index>(j)] = ids[j];
    }
    FlowSolverConfig cfg;
    cfg.cdf_correction_interval = p.at("cdf_correction_interval").get<int>();
    cfg.density_floor = p.at("density_floor").get<double>();
    const double t0 = c.t1(), t1 = (*c.cfg.t_window)[1];
    const Vec tg = Vec::LinSpaced(p.at("t_steps").get<int>(), t0, t1);
    const QuantilePath qp = quantile_flow(mu, N, idx, tg, cfg);
    save_matrix(c, log, "quantile_path.bin", pack_path(qp));
    // Direct quantiles of the tabulated flowed density, and of the closed-form CDF.
    Eigen::MatrixXd grid_q(idx.size(), tg.size()), cdf_q(idx.size(), tg.size());
    for (Eigen::Index k = 0; k < tg.size(); ++k) {
      if (tg[k] == 0.0) {
        grid_q.col(k) = qp.gamma.col(k);
        cdf_q.col(k) = qp.gamma.col(k);
        continue;
      }
      const Measure1D rho = flow_density(mu, tg[k], flow_support_grid(mu, tg[k], p.at("grid_points").get<int>()), cfg);
      for (Eigen::Index j = 0; j < idx.size(); ++j) grid_q(j, k) = quantiles(rho, N, idx[j]).value;
      cdf_q.col(k) = direct_flow_quantiles(mu, N, idx, tg[k], cfg);
    }
    save_matrix(c, log, "direct_quantiles.bin", grid_q);
    save_matrix(c, log, "cdf_quantiles.bin", cdf_q);
  };
  e.analyze = [](const Context& c) {
    const QuantilePath qp = unpack_path(read_matrix(c.data("quantile_path.bin")));
    const Eigen::MatrixXd g = read_matrix(c.data("direct_quantiles.bin"));
    const Eigen::MatrixXd a = read_matrix(c.data("cdf_quantiles.bin"));
    DiagnosticsReport rep;
    rep.name = "quantile-consistency";
    rep.statistics["max_difference"] = (g - qp.gamma).cwiseAbs().maxCoeff();
    rep.statistics["max_difference_closed_form_cdf"] = (a - qp.gamma).cwiseAbs().maxCoeff();
    rep.statistics["indices"] = static_cast<double>(qp.indices.size());
    rep.thresholds["max_difference"] = 1e-4;
    rep.rules.push_back({"consistent", PassRule::Kind::AtMost, "max_difference", "max_difference", ""});
    rep.manifest = {{"N", qp.N}, {"t_window", {qp.times[0], qp.times[qp.times.size() - 1]}}};
    rep.evaluate();
    std::vector<Series> fig;
    for (Eigen::Index j = 0; j < qp.indices.size(); ++j)
      fig.push_back({"k" + std::to_string(qp.indices[j]), to_std(qp.times), to_std(qp.gamma.row(j).transpose())});
    write_figure_csv(c.figures / "quantile_paths.lines.csv", fig);
    return std::vector<DiagnosticsReport>{rep};
  };
  return e;
}

// ---- DBM experiments -----------------------------------------------------------------

Experiment dbm_rigidity() {
  Experiment e;
  e.name = "dbm-rigidity";
  e.description = "GUE-started DBM against the quantile flow: strong and weak rigidity";
  e.defaults = {{"dt", 0.0}, {"stride", 10}, {"window", Json::array()}, {"path_steps", 11}};
  e.threshold_names = {"deviation", "fraction", "delta", "weak_fraction"};
  e.default_window = rigidity_window;
  const auto window_of = [](const Context& c) {
    const auto w = c.p().at("window").get<std::vector<int>>();
    if (w.empty()) return IndexRange{c.cfg.N / 3, 2 * c.cfg.N / 3 - 1};
    if (w.size() != 2 || w[0] < 0 || w[1] >= c.cfg.N || w[1] < w[0])
      throw ValidationError("params.window", "must be [lo, hi] inside 0..N-1");
    return IndexRange{w[0], w[1]};
  };
  e.prepare = [window_of](const Context& c, FileLog& log) {
    const IndexRange w = window_of(c);
    const int N = c.cfg.N, pad = N / 10;
    const QuantilePath qp = semicircle_path(N, std::max(N / 20, w.lo + 1 - pad), std::min(N - N / 20, w.hi + 1 + pad),
                                            (*c.cfg.t_window)[1], c.p().at("path_steps").get<int>());
    save_matrix(c, log, "quantile_path.bin", pack_path(qp));
  };
  e.replica = [](const Context& c, std::uint64_t seed, FileLog& log) {
    SdeOptions o;
    o.stride = c.p().at("stride").get<int>();
    Trajectory tr = run_dbm(ParticleConfiguration::ordered(gue_start(c, seed)), 0.0, (*c.cfg.t_window)[1],
                            param_dt(c), c.cfg.beta, seed, o);
    save_trajectory(c, log, seed_file("dbm", seed, ".traj"), tr);
  };
  e.analyze = [window_of](const Context& c) {
    const IndexRange w = window_of(c);
    const int N = c.cfg.N;
    const QuantilePath qp = unpack_path(read_matrix(c.data("quantile_path.bin")));
    std::vector<Trajectory> trajs;
    for (auto s : c.seeds_ok) {
      Trajectory tr = load_trajectory(c, seed_file("dbm", s, ".traj"));
      // Restrict to the analysis window [t1, t2].
      Eigen::Index f0 = 0;
      while (f0 + 1 < tr.frame_count() && tr.times[f0] < c.t1() - 1e-12) ++f0;
      tr.times = tr.times.tail(tr.frame_count() - f0).eval();
      tr.frames = tr.frames.rightCols(tr.frames.cols() - f0).eval();
      trajs.push_back(std::move(tr));
    }
    DiagnosticsReport strong = strong_rigidity_check(trajs, qp, w);
    // Weak rigidity per replica; the semicircle is stationary for this start.
    const Measure1D sc = semicircle_measure(2000);
    const double E_star = semicircle_quantile((N / 2 + 0.5) / N);
    std::vector<double> weak;
    for (const auto& tr : trajs)
      weak.push_back(weak_rigidity_check(tr, [&](double) { return sc; }, E_star, w, 0.05).statistics.at("max_deviation"));
    DiagnosticsReport wr;
    wr.name = "weak-rigidity";
    wr.replicas = static_cast<long>(trajs.size());
    wr.series["max_deviation"] = weak;
    wr.statistics["max_deviation"] = *std::max_element(weak.begin(), weak.end());
    wr.thresholds["delta"] = 0.05;
    wr.thresholds["weak_fraction"] = 0.95;
    wr.rules.push_back({"weakly_rigid", PassRule::Kind::FractionAtMost, "max_deviation", "delta", "weak_fraction"});
    wr.manifest = {{"E_star", E_star}, {"I_sigma", {w.lo, w.hi}}, {"N", N}};
    wr.evaluate();

    // Band figure: N (lambda_L - gamma) for a few replicas around the threshold.
    const int L = (w.lo + w.hi) / 2;
    std::vector<Series> fig;
    for (std::size_t r = 0; r < std::min<std::size_t>(5, trajs.size()); ++r) {
      const auto& tr = trajs[r];
      const int shift = static_cast<int>(strong.series["labeling_shift"][r]);
      Eigen::Index row = -1;
      for (Eigen::Index q = 0; q < qp.indices.size(); ++q)
        if (qp.indices[q] == L + 1 + shift) row = q;
      if (row < 0) continue;
      Series s{"seed" + std::to_string(tr.seed), {}, {}};
      for (Eigen::Index f = 0; f < tr.frame_count(); ++f) {
        s.x.push_back(tr.times[f]);
        s.y.push_back(N * (tr.frames(L, f) - qp.at(row, tr.times[f])));
      }
      fig.push_back(std::move(s));
    }
    const double thr = strong.thresholds.at("deviation");
    if (!trajs.empty()) {
      const auto& t = trajs.front().times;
      fig.push_back({"lo", to_std(t), std::vector<double>(t.size(), -thr)});
      fig.push_back({"hi", to_std(t), std::vector<double>(t.size(), thr)});
    }
    write_figure_csv(c.figures / "rigidity.band.csv", fig);
    return std::vector<DiagnosticsReport>{strong, wr};
  };
  return e;
}

Experiment persistent_trailing() {
  Experiment e;
  e.name = "persistent-trailing";
  e.description = "A fixed particle stays within rigidity distance of one quantile; white-noise suppression";
  e.defaults = {{"dynamics", "dbm"}, {"L", -1}, {"dt", 0.0}, {"stride", 1}, {"path_steps", 11}};
  e.threshold_names = {"sup", "ratio", "fraction", "violation"};
  e.default_window = rigidity_window;
  const auto rows_of = [](const Context& c) {
    const int L = param_L(c), h = std::max(1, c.cfg.N / 20);
    return Eigen::VectorXi::LinSpaced(2 * h + 1, L - h, L + h).eval();
  };
  e.prepare = [](const Context& c, FileLog& log) {
    const int N = c.cfg.N, L = param_L(c), pad = N / 10;
    if (L - pad < N / 20 || L + pad > N - N / 20) throw ValidationError("params.L", "must lie in the bulk");
    const QuantilePath qp =
        semicircle_path(N, L + 1 - pad, L + 1 + pad, (*c.cfg.t_window)[1], c.p().at("path_steps").get<int>());
    save_matrix(c, log, "quantile_path.bin", pack_path(qp));
  };
  e.replica = [rows_of](const Context& c, std::uint64_t seed, FileLog& log) {
    const std::string dyn = c.p().at("dynamics").get<std::string>();
    const Vec x0 = gue_start(c, seed);
    const double t2 = (*c.cfg.t_window)[1], dt = param_dt(c);
    const int stride = c.p().at("stride").get<int>();
    const Eigen::VectorXi rows = rows_of(c);
    Trajectory out;
    if (dyn == "dbm") {
      SdeOptions o;
      o.stride = stride;
      out = run_dbm(ParticleConfiguration::ordered(x0), 0.0, t2, dt, c.cfg.beta, seed, o).select(rows);
    } else if (dyn == "independent-ou") {
      // Non-interacting OU particles driven by the same noise keys as the DBM.
      const CounterRng rng(seed, 0, streams::dbm_noise);
      const auto steps = static_cast<long>(std::llround(t2 / dt));
      const double sigma = dbm_noise_scale(c.cfg.beta, c.cfg.N) * std::sqrt(dt);
      Vec x(rows.size());
      for (Eigen::Index i = 0; i < rows.size(); ++i) x[i] = x0[rows[i]];
      const long frames = steps / stride + 1;
      out.times.resize(frames);
      out.frames.resize(rows.size(), frames);
      out.times[0] = 0.0;
      out.frames.col(0) = x;
      for (long s = 0; s < steps; ++s) {
        for (Eigen::Index i = 0; i < rows.size(); ++i)
          x[i] += -0.5 * x[i] * dt + sigma * rng.normal(static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(rows[i]));
        if ((s + 1) % stride == 0) {
          out.times[(s + 1) / stride] = (s + 1) * dt;
          out.frames.col((s + 1) / stride) = x;
        }
      }
      out.labels = rows;
      out.seed = seed;
      out.beta = c.cfg.beta;
      out.dt = dt;
      out.stride = stride;
      out.scheme = "independent-ou";
    } else {
      throw ValidationError("params.dynamics", "must be 'dbm' or 'independent-ou'");
    }
    save_trajectory(c, log, seed_file("trail", seed, ".traj"), out);
  };
  e.analyze = [](const Context& c) {
    const QuantilePath qp = unpack_path(read_matrix(c.data("quantile_path.bin")));
    std::vector<Trajectory> trajs;
    for (auto s : c.seeds_ok) trajs.push_back(load_trajectory(c, seed_file("trail", s, ".traj")));
    const int L = param_L(c), N = c.cfg.N;
    DiagnosticsReport rep = persistent_trailing_check(trajs, qp, L, c.t1(), (*c.cfg.t_window)[1]);
    rep.manifest["dynamics"] = c.p().at("dynamics");
    std::vector<Series> fig;
    for (std::size_t r = 0; r < std::min<std::size_t>(5, trajs.size()); ++r) {
      const auto& tr = trajs[r];
      const Eigen::Index row = tr.labels.size() / 2;
      Series s{"seed" + std::to_string(tr.seed), {}, {}};
      for (Eigen::Index f = 0; f < tr.frame_count(); ++f) {
        s.x.push_back(tr.times[f]);
        s.y.push_back(N * (tr.frames(row, f) - tr.frames(row, 0)));
      }
      fig.push_back(std::move(s));
    }
    (void)L;
    write_figure_csv(c.figures / "trailing_fluctuation.lines.csv", fig);
    return std::vector<DiagnosticsReport>{rep};
  };
  return e;
}

// ---- matrix experiments -------------------------------------------------------------

Experiment ou_crosscheck() {
  Experiment e;
  e.name = "ou-crosscheck";
  e.description = "Composed Euler OU steps against the closed-form OU sample";
  e.defaults = {{"t", 0.5}, {"steps", 100}, {"bulk_fraction", 0.8}, {"start", "deformed-wigner"}};
  e.threshold_names = {"ks_factor"};
  e.replica = [](const Context& c, std::uint64_t seed, FileLog& log) {
    const auto sym = symmetry_from_beta(c.cfg.beta);
    const std::string start = c.p().at("start").get<std::string>();
    WignerLikeSpec spec;
    if (start == "deformed-wigner") spec = deformed_wigner_spec(c.cfg.N, sym);
    else if (start == "gaussian") spec = gaussian_spec(c.cfg.N, sym);
    else throw ValidationError("params.start", "must be 'deformed-wigner' or 'gaussian'");
    const CMatrix H0 = sample_matrix(spec, seed);
    const int steps = c.p().at("steps").get<int>();
    const double t = c.p().at("t").get<double>();
    CMatrix H = H0;
    for (int k = 0; k < steps; ++k) H = ou_step(H, t / steps, sym, seed, 0, static_cast<std::uint64_t>(k));
    Eigen::MatrixXd out(c.cfg.N, 2);
    out.col(0) = eigenvalues(H);
    out.col(1) = eigenvalues(ou_closed_form(H0, t, sym, seed));
    save_matrix(c, log, seed_file("spectra", seed, ".bin"), out);
  };
  e.analyze = [](const Context& c) {
    const int N = c.cfg.N;
    const int cut = static_cast<int>(std::lround(N * (1.0 - c.p().at("bulk_fraction").get<double>()) / 2.0));
    std::vector<double> a, b, per;
    for (auto s : c.seeds_ok) {
      const Eigen::MatrixXd m = read_matrix(c.data(seed_file("spectra", s, ".bin")));
      std::vector<double> ra, rb;
      for (int i = cut; i < N - cut; ++i) ra.push_back(m(i, 0)), rb.push_back(m(i, 1));
      per.push_back(ks_two_sample(ra, rb) / ks_bound95(ra.size(), rb.size()));
      a.insert(a.end(), ra.begin(), ra.end());
      b.insert(b.end(), rb.begin(), rb.end());
    }
    DiagnosticsReport rep;
    rep.name = "ou-crosscheck";
    rep.replicas = static_cast<long>(c.seeds_ok.size());
    const double ks = ks_two_sample(a, b);
    rep.statistics["ks"] = ks;
    rep.statistics["ks_bound95"] = ks_bound95(a.size(), b.size());
    rep.statistics["ks_ratio"] = ks / ks_bound95(a.size(), b.size());
    rep.series["replica_ks_ratio"] = per;
    rep.thresholds["ks_factor"] = 1.0;
    rep.rules.push_back({"consistent", PassRule::Kind::AtMost, "ks_ratio", "ks_factor", ""});
    rep.manifest = {{"seeds", c.seeds_ok}, {"N", N}, {"beta", c.cfg.beta}, {"t", c.p().at("t")}};
    rep.evaluate();
    write_figure_csv(c.figures / "bulk_spectrum.hist.csv", {{"euler", a, {}}, {"closed-form", b, {}}});
    return std::vector<DiagnosticsReport>{rep};
  };
  return e;
}

// Centers i0 (0-based) and their rescaling densities.
struct Centers {
  std::vector<int> i0;
  Vec rho_relaxed, rho_sc;
};

Centers gap_centers(const Context& c) {
  const int N = c.cfg.N;
  const auto& p = c.p();
  const int lo = static_cast<int>(N * p.at("center_lo").get<double>());
  const int hi = static_cast<int>(N * p.at("center_hi").get<double>());
  const int stride = std::max(1, p.at("center_stride").get<int>());
  Centers out;
  for (int i = lo; i < hi; i += stride) out.i0.push_back(i);
  const auto n = static_cast<Eigen::Index>(out.i0.size());
  out.rho_relaxed.resize(n);
  out.rho_sc.resize(n);
  const double T = p.at("t").get<double>();
  const Measure1D mu = Measure1D::atomic((Vec(2) << -1.0, 1.0).finished(), (Vec(2) << 0.5, 0.5).finished());
  const Vec grid = Vec::LinSpaced(p.at("grid_points").get<int>(), -3.5, 3.5);
  const Measure1D rho = free_convolution_density(mu, std::exp(-T / 2.0), 1.0, grid);
  for (Eigen::Index k = 0; k < n; ++k) {
    const int idx = out.i0[static_cast<std::size_t>(k)] + 1;
    out.rho_relaxed[k] = rho.density(quantiles(rho, N, idx).value);
    out.rho_sc[k] = semicircle_density(semicircle_quantile(static_cast<double>(idx) / N));
  }
  return out;
}

Experiment gap_universality() {
  Experiment e;
  e.name = "gap-universality";
  e.description = "Rescaled bulk gaps of an OU-relaxed deformed Wigner matrix against GUE/GOE";
  e.defaults = {{"t", 0.5}, {"mode", "relaxed"}, {"center_lo", 0.25}, {"center_hi", 0.75},
                {"center_stride", 2}, {"grid_points", 4001}};
  e.threshold_names = {"ks_factor", "observable_tol"};
  e.replica = [](const Context& c, std::uint64_t seed, FileLog& log) {
    const auto sym = symmetry_from_beta(c.cfg.beta);
    const std::string mode = c.p().at("mode").get<std::string>();
    if (mode != "relaxed" && mode != "unrelaxed-control")
      throw ValidationError("params.mode", "must be 'relaxed' or 'unrelaxed-control'");
    const double T = mode == "relaxed" ? c.p().at("t").get<double>() : 0.0;
    const CMatrix H0 = sample_matrix(deformed_wigner_spec(c.cfg.N, sym), seed);
    Eigen::MatrixXd out(c.cfg.N, 2);
    out.col(0) = eigenvalues(ou_closed_form(H0, T, sym, seed));
    // Reference ensemble on an independent replica id.
    out.col(1) = eigenvalues(gaussian_ensemble(c.cfg.N, sym, seed, 1));
    save_matrix(c, log, seed_file("spectra", seed, ".bin"), out);
  };
  e.analyze = [](const Context& c) {
    const Centers ctr = gap_centers(c);
    const bool relaxed = c.p().at("mode").get<std::string>() == "relaxed";
    std::vector<Vec> a, b;
    for (auto s : c.seeds_ok) {
      const Eigen::MatrixXd m = read_matrix(c.data(seed_file("spectra", s, ".bin")));
      a.push_back(m.col(0));
      b.push_back(m.col(1));
    }
    const double T = c.p().at("t").get<double>();
    // The control rescales the unrelaxed spectrum with the semicircle density.
    const GapSample ga = gap_statistics(a, ctr.i0, 2, relaxed ? ctr.rho_relaxed : ctr.rho_sc, relaxed ? T : 0.0);
    const GapSample gb = gap_statistics(b, ctr.i0, 2, ctr.rho_sc, 0.0);
    DiagnosticsReport rep = compare_gap_laws(ga, gb);
    rep.manifest["seeds"] = c.seeds_ok;
    rep.manifest["mode"] = c.p().at("mode");
    rep.manifest["beta"] = c.cfg.beta;
    write_figure_csv(c.figures / "first_gaps.hist.csv",
                     {{relaxed ? "relaxed" : "unrelaxed", to_std(ga.first_gaps()), {}},
                      {"gaussian", to_std(gb.first_gaps()), {}}});
    return std::vector<DiagnosticsReport>{rep};
  };
  return e;
}

Experiment level_repulsion() {
  Experiment e;
  e.name = "level-repulsion";
  e.description = "Small-gap exponent of bulk rescaled gaps (Poisson negative control available)";
  e.defaults = {{"generator", "gaussian"}, {"u_max", 0.3}, {"bulk_lo", 0.25}, {"bulk_hi", 0.75}};
  e.threshold_names = {"band"};
  e.replica = [](const Context& c, std::uint64_t seed, FileLog& log) {
    const std::string gen = c.p().at("generator").get<std::string>();
    Vec x;
    if (gen == "gaussian") {
      x = eigenvalues(gaussian_ensemble(c.cfg.N, symmetry_from_beta(c.cfg.beta), seed));
    } else if (gen == "poisson-control") {
      const CounterRng rng(seed, 0, streams::control);
      x.resize(c.cfg.N);
      for (int i = 0; i < c.cfg.N; ++i) x[i] = rng.uniform(0, static_cast<std::uint64_t>(i));
      std::sort(x.data(), x.data() + x.size());
    } else {
      throw ValidationError("params.generator", "must be 'gaussian' or 'poisson-control'");
    }
    save_matrix(c, log, seed_file("points", seed, ".bin"), x);
  };
  e.analyze = [](const Context& c) {
    const int N = c.cfg.N;
    const bool poisson = c.p().at("generator").get<std::string>() == "poisson-control";
    std::vector<Vec> spectra;
    for (auto s : c.seeds_ok) spectra.push_back(as_vec(read_matrix(c.data(seed_file("points", s, ".bin")))));
    std::vector<int> i0;
    const int lo = static_cast<int>(N * c.p().at("bulk_lo").get<double>());
    const int hi = static_cast<int>(N * c.p().at("bulk_hi").get<double>());
    for (int i = lo; i < hi; ++i) i0.push_back(i);
    Vec rho(i0.size());
    for (std::size_t k = 0; k < i0.size(); ++k)
      rho[static_cast<Eigen::Index>(k)] =
          poisson ? 1.0 : semicircle_density(semicircle_quantile((i0[k] + 1.0) / N));
    const GapSample g = gap_statistics(spectra, i0, 1, rho);
    const Vec pooled = g.pooled();
    DiagnosticsReport rep = level_repulsion_fit(pooled, c.cfg.beta, c.p().at("u_max").get<double>());
    rep.replicas = static_cast<long>(spectra.size());
    rep.manifest["seeds"] = c.seeds_ok;
    rep.manifest["N"] = N;
    rep.manifest["generator"] = c.p().at("generator");
    rep.statistics["mean_gap"] = pooled.mean();
    // Empirical CDF on log-log axes with the reference slope.
    std::vector<double> s(pooled.data(), pooled.data() + pooled.size());
    std::sort(s.begin(), s.end());
    Series emp{"empirical", {}, {}}, ref{"slope beta+1", {}, {}};
    const double n = static_cast<double>(s.size());
    for (std::size_t k = 0; k < s.size() && s[k] <= 1.0; k += std::max<std::size_t>(1, s.size() / 2000)) {
      if (s[k] <= 0.0) continue;
      emp.x.push_back(std::log10(s[k]));
      emp.y.push_back(std::log10((k + 1.0) / n));
    }
    if (!emp.x.empty()) {
      const double x0 = emp.x.back(), y0 = emp.y.back();
      for (double x : {emp.x.front(), x0}) {
        ref.x.push_back(x);
        ref.y.push_back(y0 + (c.cfg.beta + 1.0) * (x - x0));
      }
    }
    write_figure_csv(c.figures / "small_gap_cdf.lines.csv", {emp, ref});
    write_figure_csv(c.figures / "gaps.hist.csv", {{"rescaled gaps", s, {}}});
    return std::vector<DiagnosticsReport>{rep};
  };
  return e;
}

// ---- local equilibrium -------------------------------------------------------------------

Experiment local_gibbs_sample() {
  Experiment e;
  e.name = "local-gibbs-sample";
  e.description = "Local log-gas with frozen exterior: window rigidity and level repulsion";
  e.defaults = {{"K", 20},         {"L", -1},         {"samples", 2000},       {"burn_in_factor", 5.0},
                {"stride_factor", 1.0}, {"dt", 1e-4}, {"metropolis", true},   {"convention", "reference"},
                {"eps_star", 0.0}, {"u_max", 0.3}};
  e.threshold_names = {"deviation", "fraction", "band"};
  const auto spec_of = [](const Context& c) {
    const int N = c.cfg.N, K = c.p().at("K").get<int>();
    const WindowSpec w{N, param_L(c), K};
    w.validate();
    const Vec g = semicircle_quantiles(N);
    const Eigen::VectorXi ext = w.exterior_labels();
    LocalMeasureSpec s;
    s.N = N;
    s.beta = c.cfg.beta;
    s.window = w;
    s.exterior.resize(ext.size());
    for (Eigen::Index k = 0; k < ext.size(); ++k) s.exterior[k] = g[ext[k]];
    s.V = Potential::quadratic(0.5);
    s.eps_star = c.p().at("eps_star").get<double>();
    const std::string conv = c.p().at("convention").get<std::string>();
    if (conv == "reference") s.convention = PotentialConvention::Reference;
    else if (conv == "window") s.convention = PotentialConvention::Window;
    else throw ValidationError("params.convention", "must be 'reference' or 'window'");
    s.validate();
    return s;
  };
  e.replica = [spec_of](const Context& c, std::uint64_t seed, FileLog& log) {
    const LocalMeasureSpec s = spec_of(c);
    const double KN = static_cast<double>(s.window.K) / s.N;
    SamplerOptions o;
    o.metropolis = c.p().at("metropolis").get<bool>();
    const GibbsSamples gs = sample_local_gibbs(s, c.p().at("burn_in_factor").get<double>() * KN,
                                               c.p().at("samples").get<int>(),
                                               c.p().at("stride_factor").get<double>() * KN,
                                               c.p().at("dt").get<double>(), seed, o);
    save_matrix(c, log, seed_file("samples", seed, ".bin"), gs.samples);
    Eigen::MatrixXd info(1, 4);
    info << gs.acceptance_rate, static_cast<double>(gs.containment_events), static_cast<double>(gs.steps),
        static_cast<double>(gs.halvings);
    save_matrix(c, log, seed_file("sampler", seed, ".bin"), info);
  };
  e.analyze = [spec_of](const Context& c) {
    const LocalMeasureSpec s = spec_of(c);
    const int N = s.N;
    const Vec g = semicircle_quantiles(N);
    std::vector<double> dev, gaps;
    double acc = 0.0, viol = 0.0, steps = 0.0;
    std::vector<Vec> configs;
    for (auto seed : c.seeds_ok) {
      const Eigen::MatrixXd m = read_matrix(c.data(seed_file("samples", seed, ".bin")));
      const Eigen::MatrixXd info = read_matrix(c.data(seed_file("sampler", seed, ".bin")));
      acc += info(0, 0);
      viol += info(0, 1);
      steps += info(0, 2);
      for (Eigen::Index k = 0; k < m.cols(); ++k) {
        double d = 0.0;
        for (Eigen::Index i = 0; i < m.rows(); ++i) d = std::max(d, std::abs(m(i, k) - g[s.window.first() + i]));
        dev.push_back(d);
        for (Eigen::Index i = 0; i + 1 < m.rows(); ++i) {
          const double mid = 0.5 * (m(i, k) + m(i + 1, k));
          gaps.push_back(N * semicircle_density(mid) * (m(i + 1, k) - m(i, k)));
        }
        if (k % 50 == 0) configs.push_back(m.col(k));
      }
    }
    DiagnosticsReport rig;
    rig.name = "local-gibbs-rigidity";
    rig.replicas = static_cast<long>(dev.size());
    rig.series["max_deviation"] = dev;
    rig.statistics["worst_deviation_scaled"] = N * *std::max_element(dev.begin(), dev.end());
    rig.statistics["acceptance_rate"] = acc / c.seeds_ok.size();
    rig.statistics["containment_rate"] = steps > 0 ? viol / steps : 0.0;
    rig.statistics["hessian_lower_bound"] = hessian_lower_bound(s, configs);
    rig.statistics["hessian_bound_over_N_per_K"] = rig.statistics["hessian_lower_bound"] * s.window.K / N;
    rig.thresholds["deviation"] = 5.0 * std::log(static_cast<double>(N)) / N;
    rig.thresholds["fraction"] = 0.95;
    rig.rules.push_back({"rigid", PassRule::Kind::FractionAtMost, "max_deviation", "deviation", "fraction"});
    rig.manifest = {{"seeds", c.seeds_ok}, {"N", N}, {"beta", s.beta}, {"K", s.window.K}, {"L", s.window.L}};
    rig.evaluate();
    const Vec gv = Eigen::Map<const Vec>(gaps.data(), static_cast<Eigen::Index>(gaps.size()));
    DiagnosticsReport rep = level_repulsion_fit(gv, s.beta, c.p().at("u_max").get<double>());
    rep.name = "local-gibbs-repulsion";
    rep.statistics["mean_gap"] = gv.mean();
    rep.manifest["seeds"] = c.seeds_ok;
    write_figure_csv(c.figures / "window_gaps.hist.csv", {{"rescaled gaps", gaps, {}}});
    return std::vector<DiagnosticsReport>{rig, rep};
  };
  return e;
}

// ---- coupling ------------------------------------------------------------------------------

struct CoupledRun {
  Trajectory bar, hat, tilde, exterior;
  Vec tilde_gamma;
  double eps = 0.0, upsilon = 0.0;
};

// Full DBM from a GUE start; the window copy x-tilde starts from an independent
// draw of the reference measure and is driven by the same noise unless `coupled` is false.
CoupledRun simulate_coupled(const Context& c, std::uint64_t seed, double t_end, bool coupled) {
  const int N = c.cfg.N, K = c.p().at("K").get<int>();
  const WindowSpec w{N, param_L(c), K};
  w.validate();
  const double dt = param_dt(c), beta = c.cfg.beta;
  const Trajectory lam = run_dbm(ParticleConfiguration::ordered(gue_start(c, seed)), 0.0, t_end, dt, beta, seed);
  CoupledRun r;
  r.exterior = lam.select(w.exterior_labels());
  const Vec y0 = r.exterior.frame(0);
  const Measure1D sc = semicircle_measure(2000);
  const double gL = semicircle_quantile((w.L + 1.0) / N);
  const AuxEnsemble aux = build_aux_ensemble(sc, gL, y0, w);
  r.tilde_gamma = build_reference_points(y0, aux.z, w);
  r.upsilon = mean_drift(sc, gL);
  const Vec xbar0 = lam.frame(0).segment(w.first(), w.size());
  SdeOptions pre;
  pre.replica = 1;
  const Trajectory eq = run_coupled_reference(xbar0, r.tilde_gamma, w, r.upsilon, 0.0,
                                              c.p().at("pre_equilibration").get<double>(), dt, beta, seed, pre);
  const Vec xt0 = eq.frame(eq.frame_count() - 1);
  RegularizedRun reg = run_regularized(xbar0, r.exterior, w, 0.0, c.p().at("C1").get<double>(), r.upsilon, 0.0,
                                       t_end, dt, beta, seed);
  SdeOptions tl;
  tl.replica = coupled ? 0 : 2;
  r.tilde = run_coupled_reference(xt0, r.tilde_gamma, w, r.upsilon, 0.0, t_end, dt, beta, seed, tl);
  r.bar = std::move(reg.bar);
  r.hat = std::move(reg.hat);
  r.eps = reg.eps;
  return r;
}

Json coupling_defaults() {
  return {{"K", 20}, {"L", -1}, {"dt", 0.0}, {"pre_equilibration", 0.25}, {"C1", 1.5}};
}

Experiment coupling_flatten() {
  Experiment e;
  e.name = "coupling-flatten";
  e.description = "Shared-noise coupling of the regularized window process and the reference copy";
  e.defaults = coupling_defaults();
  e.defaults["coupling"] = "shared";
  e.defaults["tau_exponent"] = 0.5;
  e.defaults["C"] = 2;
  e.threshold_names = {"ratio", "fraction"};
  const auto tau = [](const Context& c) {
    return std::pow(c.p().at("K").get<double>(), c.p().at("tau_exponent").get<double>()) / c.cfg.N;
  };
  e.replica = [tau](const Context& c, std::uint64_t seed, FileLog& log) {
    const std::string mode = c.p().at("coupling").get<std::string>();
    if (mode != "shared" && mode != "independent")
      throw ValidationError("params.coupling", "must be 'shared' or 'independent'");
    const CoupledRun r = simulate_coupled(c, seed, tau(c) + 2.0 * param_dt(c), mode == "shared");
    save_trajectory(c, log, seed_file("hat", seed, ".traj"), r.hat);
    save_trajectory(c, log, seed_file("tilde", seed, ".traj"), r.tilde);
  };
  e.analyze = [tau](const Context& c) {
    const bool shared = c.p().at("coupling").get<std::string>() == "shared";
    const int L = param_L(c), C = c.p().at("C").get<int>();
    std::vector<FlatteningSample> samples;
    std::vector<Series> fig;
    for (auto s : c.seeds_ok) {
      const Trajectory hat = load_trajectory(c, seed_file("hat", s, ".traj"));
      const Trajectory tilde = load_trajectory(c, seed_file("tilde", s, ".traj"));
      // The independent control declares the missing coupling explicitly.
      samples.push_back(gap_flattening(hat, tilde, c.cfg.N, L, 0.0, tau(c), C, !shared));
      if (fig.size() < 5) {
        Series sr{"seed" + std::to_string(s), {}, {}};
        for (Eigen::Index f = 0; f < hat.frame_count(); f += std::max<Eigen::Index>(1, hat.frame_count() / 50)) {
          sr.x.push_back(hat.times[f]);
          sr.y.push_back(gap_flattening(hat, tilde, c.cfg.N, L, hat.times[f], hat.times[f], C, !shared).after);
        }
        fig.push_back(std::move(sr));
      }
    }
    DiagnosticsReport rep = gap_flattening_check(samples);
    rep.manifest = {{"seeds", c.seeds_ok}, {"N", c.cfg.N}, {"K", c.p().at("K")}, {"L", L},
                    {"T1p", 0.0}, {"T1pp", tau(c)}, {"coupling", c.p().at("coupling")}};
    write_figure_csv(c.figures / "gap_difference.lines.csv", fig);
    return std::vector<DiagnosticsReport>{rep};
  };
  return e;
}

Experiment finite_speed() {
  Experiment e;
  e.name = "finite-speed";
  e.description = "Propagator of the coupling's parabolic equation against the finite-speed envelope";
  e.defaults = coupling_defaults();
  e.defaults["span_factor"] = 1.0;
  e.defaults["sources"] = Json::array();
  e.defaults["regularity"] = false;
  e.threshold_names = {"C", "rho"};
  const auto span = [](const Context& c) {
    return c.p().at("span_factor").get<double>() * c.p().at("K").get<double>() / c.cfg.N;
  };
  e.replica = [span](const Context& c, std::uint64_t seed, FileLog& log) {
    const CoupledRun r = simulate_coupled(c, seed, span(c), true);
    save_trajectory(c, log, seed_file("bar", seed, ".traj"), r.bar);
    save_trajectory(c, log, seed_file("hat", seed, ".traj"), r.hat);
    save_trajectory(c, log, seed_file("tilde", seed, ".traj"), r.tilde);
    save_trajectory(c, log, seed_file("exterior", seed, ".traj"), r.exterior);
    Eigen::MatrixXd extra(r.tilde_gamma.size() + 2, 1);
    extra << r.eps, r.upsilon, r.tilde_gamma;
    save_matrix(c, log, seed_file("reference", seed, ".bin"), extra);
  };
  e.analyze = [span](const Context& c) {
    const int N = c.cfg.N, K = c.p().at("K").get<int>();
    const WindowSpec w{N, param_L(c), K};
    std::vector<int> sources = c.p().at("sources").get<std::vector<int>>();
    if (sources.empty()) sources = {0, K, 2 * K};
    std::vector<double> ratios, rho_hat;
    std::vector<Series> fig;
    Eigen::MatrixXd heat;
    for (auto s : c.seeds_ok) {
      const Trajectory bar = load_trajectory(c, seed_file("bar", s, ".traj"));
      const Trajectory hat = load_trajectory(c, seed_file("hat", s, ".traj"));
      const Trajectory tilde = load_trajectory(c, seed_file("tilde", s, ".traj"));
      const Trajectory ext = load_trajectory(c, seed_file("exterior", s, ".traj"));
      const Eigen::MatrixXd extra = read_matrix(c.data(seed_file("reference", s, ".bin")));
      const Vec tg = extra.col(0).tail(extra.rows() - 2);
      const CouplingCoefficients cc =
          extract_coupling({bar, hat, tilde}, ext, tg, extra(0, 0), w, extra(1, 0), 0.0, 0.0);
      const double t_end = cc.times[cc.frame_count() - 1];
      const double h = std::min(0.9 * max_stable_dt(cc, 0.0, t_end), param_dt(c));
      for (int j : sources) {
        if (j < 0 || j >= w.size()) throw ValidationError("params.sources", "source outside the window");
        const DiagnosticsReport r = finite_speed_check(cc, j, 0.0, t_end, h);
        ratios.push_back(r.statistics.at("max_ratio"));
        if (fig.size() < 3) {
          const auto& pt = r.series.at("max_ratio_per_time");
          fig.push_back({"seed" + std::to_string(s) + " j" + std::to_string(j),
                         std::vector<double>(pt.size()), pt});
          for (std::size_t k = 0; k < pt.size(); ++k) fig.back().x[k] = static_cast<double>(k) / std::max<std::size_t>(1, pt.size() - 1) * t_end;
        }
      }
      if (c.p().at("regularity").get<bool>())
        rho_hat.push_back(strong_regularity(cc, K, t_end).statistics.at("rho_hat"));
      if (heat.size() == 0) heat = cc.B[static_cast<std::size_t>(cc.frame_count() / 2)];
    }
    DiagnosticsReport rep;
    rep.name = "finite-speed";
    rep.replicas = static_cast<long>(c.seeds_ok.size());
    rep.series["max_ratio"] = ratios;
    rep.statistics["max_ratio"] = *std::max_element(ratios.begin(), ratios.end());
    rep.thresholds["C"] = 10.0;
    rep.rules.push_back({"finite_speed", PassRule::Kind::AtMost, "max_ratio", "C", ""});
    rep.manifest = {{"seeds", c.seeds_ok}, {"N", N}, {"K", K}, {"sources", sources}, {"span", span(c)}};
    std::vector<DiagnosticsReport> out;
    rep.evaluate();
    out.push_back(rep);
    if (!rho_hat.empty()) {
      DiagnosticsReport reg;
      reg.name = "strong-regularity";
      reg.replicas = static_cast<long>(rho_hat.size());
      reg.series["rho_hat"] = rho_hat;
      reg.statistics["max_rho_hat"] = *std::max_element(rho_hat.begin(), rho_hat.end());
      reg.thresholds["rho"] = 0.1;
      reg.rules.push_back({"regular", PassRule::Kind::AtMost, "max_rho_hat", "rho", ""});
      reg.evaluate();
      out.push_back(reg);
    }
    write_figure_csv(c.figures / "propagator_ratio.lines.csv", fig);
    std::vector<Series> hs;
    for (Eigen::Index i = 0; i < heat.rows(); ++i) {
      Series row{"row" + std::to_string(i), {}, {}};
      for (Eigen::Index j = 0; j < heat.cols(); ++j) row.x.push_back(static_cast<double>(j)), row.y.push_back(heat(i, j));
      hs.push_back(std::move(row));
    }
    write_figure_csv(c.figures / "kernel_B.heat.csv", hs);
    return out;
  };
  return e;
}

}  // namespace

const std::vector<Experiment>& registry() {
  static const std::vector<Experiment> all = {
      semicircle_invariance(), flow_from_atoms(),   quantile_consistency(), dbm_rigidity(),
      ou_crosscheck(),         gap_universality(),  level_repulsion(),      local_gibbs_sample(),
      coupling_flatten(),      finite_speed(),      persistent_trailing()};
  return all;
}

const Experiment& find_experiment(const std::string& name) {
  for (const auto& e : registry())
    if (e.name == name) return e;
  throw ValidationError("experiment", "unknown experiment '" + name + "'");
}

}  // namespace dbm::cli::detail
