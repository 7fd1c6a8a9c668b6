#pragma once

#include <Eigen/Dense>
#include <functional>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "dbmlab/dbm.hpp"
#include "dbmlab/measures.hpp"
#include "dbmlab/semicircular_flow.hpp"

namespace dbm {

using Json = nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;

// A pass flag as a pure function of statistics and thresholds.
struct PassRule {
  enum class Kind {
    AtMost,          // statistic <= threshold
    AtLeast,         // statistic >= threshold
    FractionAtMost,  // fraction of series entries <= threshold is >= fraction threshold
  };
  std::string flag;
  Kind kind = Kind::AtMost;
  std::string statistic;  // scalar statistic or series name
  std::string threshold;
  std::string fraction_threshold;  // FractionAtMost only
};

struct DiagnosticsReport {
  std::string name;
  Json manifest = Json::object();  // seeds, N, beta, time window, ...
  std::map<std::string, double> statistics;
  std::map<std::string, std::vector<double>> series;  // per-replica statistics
  std::map<std::string, double> thresholds;
  std::vector<PassRule> rules;
  std::map<std::string, bool> passes;
  long replicas = 0;

  // Recomputes every pass flag from the rules; fraction rules also store
  // "<series>_fraction" as a statistic.
  void evaluate();
  bool pass() const;
  Json to_json() const;
  static DiagnosticsReport from_json(const Json& j);
};

// ---- statistics helpers ------------------------------------------------------

// Two-sample Kolmogorov-Smirnov distance.
double ks_two_sample(std::vector<double> a, std::vector<double> b);
// One-sample distance against a continuous CDF.
double ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf);
// 95% critical value 1.36 sqrt(1/n_a + 1/n_b).
inline double ks_bound95(double na, double nb) { return 1.36 * std::sqrt(1.0 / na + 1.0 / nb); }

struct LinearFit {
  double slope = 0.0, intercept = 0.0, slope_se = 0.0;
  long n = 0;
};
LinearFit ols(const Vec& x, const Vec& y);

// Compactly supported bump exp(1 - 1/(1 - u^2)) on |u| < 1.
double bump(double u);

// ---- rigidity ---------------------------------------------------------------

// Integer shift minimising sum_{i in window} |lambda_i - gamma_{i+shift}|, searched
// over |shift| <= N/10. gamma is indexed like lambda (gamma[i] is the quantile of particle i).
int match_labeling(const Vec& lambda, const Vec& gamma, IndexRange window);

// Per replica sup over frames and i in window of N |lambda_i(t) - gamma_{i+shift}(t)|.
// Trajectories may carry a subset of labels covering the window; N is qpath.N.
// The path must carry rows for every index it is asked about (1-based k = i + 1 + shift).
DiagnosticsReport strong_rigidity_check(const std::vector<Trajectory>& trajs, const QuantilePath& qpath,
                                        IndexRange window, double threshold = -1.0, double fraction = 0.95);

// rho_at(t) returns the density at time t. Excluded set I_sigma uses 0-based indices.
DiagnosticsReport weak_rigidity_check(const Trajectory& traj, const std::function<Measure1D(double)>& rho_at,
                                      double E_star, IndexRange I_sigma, double delta_threshold);

// ---- gaps ---------------------------------------------------------------------

// Rows: one (replica, i0) draw; columns: rescaled gaps N rho* (lambda_{i0+j} - lambda_{i0+j-1}), j = 1..n.
struct GapSample {
  Eigen::MatrixXd gaps;
  Eigen::VectorXi i0;
  Vec rho_star;
  double T = 0.0;
  int N = 0;

  Eigen::Index size() const { return gaps.rows(); }
  Vec first_gaps() const { return gaps.col(0); }
  // All gaps pooled.
  Vec pooled() const;
  void append(const GapSample& other);
};

// Gaps for one center index i0 across spectra (each a sorted spectrum of size N).
GapSample gap_statistics(const std::vector<Vec>& spectra, int i0, int n, double rho_star, double T = 0.0);
// Convenience: several centers with their own rho*.
GapSample gap_statistics(const std::vector<Vec>& spectra, const std::vector<int>& i0s, int n, const Vec& rho_stars,
                         double T = 0.0);

struct ObservableBattery {
  std::vector<double> centers{0.5, 1.0, 1.5};
  double width = 0.5;
  // O1_c = E phi((g1 - c)/w) and O2_c = E phi((g1 - c)/w) phi((g2 - c)/w).
  Vec evaluate(const GapSample& s) const;
};

DiagnosticsReport compare_gap_laws(const GapSample& a, const GapSample& b, double ks_factor = 1.5,
                                   double observable_tol = 0.05);

// Slope of log F(u) vs log u over u <= u_max (OLS on order statistics) plus Hill MLE.
DiagnosticsReport level_repulsion_fit(const Vec& rescaled_gaps, double beta, double u_max = 0.3,
                                      double band = 0.3);

// ---- coupling dynamics ----------------------------------------------------------

// sup over frames t in [T1p, theta] and dyadic M of
// (1/N + |t - theta|)^-1 int_t^theta M^-1 sum_{|i-Z|,|j-Z| <= M} |B_ij| ds; rho_hat = log_N(stat / N).
DiagnosticsReport regularity_average(const CouplingCoefficients& c, int Z, double theta, double rho_threshold = 0.1);
// Regularity at every recorded point theta + Omega.
DiagnosticsReport strong_regularity(const CouplingCoefficients& c, int Z, double theta, double rho_threshold = 0.1);

DiagnosticsReport finite_speed_check(const CouplingCoefficients& c, int j, double s, double t_end, double dt,
                                     double C_threshold = 10.0, int record_every = 1);

// Per replica: sup N |lambda_L - gamma_{l(L)}| and sup |lambda_L(t) - lambda_L(t1)| / sqrt((t2 - t1)/N).
// The labeling is matched on labels L +- N/20, which the trajectories must carry.
// Throws DomainError when a replica starts farther than start_tolerance (default 5 log N / N).
DiagnosticsReport persistent_trailing_check(const std::vector<Trajectory>& trajs, const QuantilePath& qpath, int L,
                                            double t1, double t2, double start_tolerance = -1.0,
                                            double fraction = 0.9);

struct FlatteningSample {
  double before = 0.0, after = 0.0;
};
// N max_{|i-L|<=C} |(hat_{i+1}-hat_i) - (tilde_{i+1}-tilde_i)| at T1p and T1pp.
// N is the full system size (the trajectories carry only the window).
FlatteningSample gap_flattening(const Trajectory& hat, const Trajectory& tilde, int N, int L, double T1p,
                                double T1pp, int C = 2, bool allow_uncoupled = false);
DiagnosticsReport gap_flattening_check(const std::vector<FlatteningSample>& samples, double fraction = 0.8);

}  // namespace dbm
