#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "dbmlab/measures.hpp"

namespace dbm {

struct FlowSolverConfig {
  double tol = 1e-13;
  int max_iter = 400;
  double damping = 0.5;
  double eta_star = -1.0;  // -1: automatic, 1e-6 x support width
  double density_floor = 1e-3;
  // Quantile ODE: direct CDF re-anchoring every this many accepted steps (0 = off).
  int cdf_correction_interval = 10;
  // Quantile ODE: local error target per step (absolute, spectral units).
  double ode_tol = 1e-9;

  void validate() const;
};

struct FlowSolveInfo {
  int iterations = 0;
  int levels = 0;
  double residual = 0.0;
};

// Stieltjes transform of F_t[rho0] at z: the solution of
//   m = \int drho0(y) / (e^{-t/2} y - z - (1 - e^{-t}) m),  Im m > 0.
Complex solve_mt(const Measure1D& rho0, double t, ComplexPoint z, const FlowSolverConfig& cfg = {},
                 FlowSolveInfo* info = nullptr);

// Same fixed point for an arbitrary scale a > 0 and Gaussian variance s >= 0:
//   m = \int dmu(y) / (a y - z - s m).
Complex solve_free_convolution(const Measure1D& mu, double a, double s, Complex z,
                               const FlowSolverConfig& cfg = {}, FlowSolveInfo* info = nullptr,
                               const Complex* guess = nullptr);

// Residual |m - RHS(m)| of the fixed-point equation.
double flow_residual(const Measure1D& rho0, double t, Complex z, Complex m);

Measure1D flow_density(const Measure1D& rho0, double t, const Vec& grid, const FlowSolverConfig& cfg = {});

// Density of F_t[rho0] with explicit (a, s) parameters; see solve_free_convolution.
Measure1D free_convolution_density(const Measure1D& mu, double a, double s, const Vec& grid,
                                   const FlowSolverConfig& cfg = {});

struct QuantilePath {
  Eigen::VectorXi indices;   // 1-based quantile indices k (gamma_k = k/N level)
  Vec times;
  Eigen::MatrixXd gamma;     // index x time
  int labeling_shift = 0;
  double upsilon_L = 0.0;
  int N = 0;
  int corrections = 0;       // CDF re-anchorings performed
  double max_correction = 0.0;

  // Linear interpolation in time of gamma for row r.
  double at(Eigen::Index row, double t) const;
};

QuantilePath quantile_flow(const Measure1D& rho0, int N, const Eigen::VectorXi& indices, const Vec& t_grid,
                           const FlowSolverConfig& cfg = {});

// Quantiles of the eta-regularized F_t[rho0] computed directly from its CDF.
Vec direct_flow_quantiles(const Measure1D& rho0, int N, const Eigen::VectorXi& indices, double t,
                          const FlowSolverConfig& cfg = {}, int grid_points = 4000);

// Right-hand side of the regularized quantile ODE at position g and time t.
double quantile_velocity(const Measure1D& rho0, double t, double g, const FlowSolverConfig& cfg,
                         Complex* warm = nullptr);

double mean_drift(const Measure1D& rho_t1, double gamma_L);

double burgers_residual(const Measure1D& rho0, double t, double dt, const std::vector<Complex>& z_grid,
                        const FlowSolverConfig& cfg = {}, double dz = -1.0);

struct DensityRegularityReport {
  double min_density = 0.0;
  double max_density = 0.0;
  double max_abs_derivative = 0.0;
  bool below_floor = false;
  double floor = 0.0;
};

DensityRegularityReport density_regularity_check(const Measure1D& rho0, double t_lo, double t_hi, double E_lo,
                                                 double E_hi, const FlowSolverConfig& cfg = {}, int n_t = 5,
                                                 int n_E = 101);

// Grid covering the evolved support with some padding.
Vec flow_support_grid(const Measure1D& rho0, double t, int points, double pad = 0.2);

void write_quantile_csv(std::ostream& os, const QuantilePath& path);
void write_density_snapshot_csv(std::ostream& os, double t, const Measure1D& rho);

}  // namespace dbm
