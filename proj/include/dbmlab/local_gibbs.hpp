#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dbmlab/dbm.hpp"
#include "dbmlab/measures.hpp"

namespace dbm {

// Confining potential: quadratic a x^2 + b x, or a table interpolated linearly.
class Potential {
 public:
  static Potential quadratic(double a, double b = 0.0);
  static Potential tabulated(Vec grid, Vec values);
  double value(double x) const;
  double derivative(double x) const;
  bool is_quadratic() const { return quadratic_; }
  double a() const { return a_; }
  double b() const { return b_; }
  const Vec& grid() const { return grid_; }
  const Vec& values() const { return values_; }

 private:
  bool quadratic_ = true;
  double a_ = 0.5, b_ = 0.0;
  Vec grid_, values_;
};

struct BetaEnsembleSpec {
  int N = 0;
  double beta = 2.0;
  Potential V = Potential::quadratic(0.5);
  void validate() const;
};

// Window convention V - (2/N) sum log|x - y| or the reference-measure convention
// V/2 - (1/N) sum log|x - y|. Both give the same sampler force.
enum class PotentialConvention { Window, Reference };

struct LocalMeasureSpec {
  int N = 0;
  double beta = 2.0;
  WindowSpec window;
  Vec exterior;  // ordered, one point per exterior index
  Potential V = Potential::quadratic(0.5);
  double eps_star = 0.0;  // 0 keeps exact logarithms
  PotentialConvention convention = PotentialConvention::Reference;

  void validate() const;
  double J_lo() const { return exterior[window.first() - 1]; }
  double J_hi() const { return exterior[window.first()]; }
  // The 2K+1 equidistant points inside J.
  Vec equidistant() const;
};

double log_eps(double x, double eps);
double log_eps_derivative(double x, double eps);

// V^y(x) under spec.convention. Only N, exterior, V, eps_star and the
// convention are used, so any number of exterior points is allowed.
double external_potential(const LocalMeasureSpec& spec, double x);
double external_potential_derivative(const LocalMeasureSpec& spec, double x);

// Ramp geometry for the reference points: iota = 1 for |k - L| <= inner, linear
// down to 0 at inner + ramp. Negative values select min(K^3, (N - 2K - 1)/4) and K^2.
struct RampSpec {
  double inner = -1.0;
  double ramp = -1.0;
};

// gamma~_k = iota_k z_k + (1 - iota_k) y_k over the exterior indices.
Vec build_reference_points(const Vec& y_T1, const Vec& z, const WindowSpec& window, RampSpec ramp = {});

struct AuxEnsemble {
  double varsigma = 1.0;        // density match at the anchor
  double s = 1.0;               // |J_ytilde| / |J_y|
  double varsigma_prime = 1.0;  // scale of the semicircle actually used (varsigma / s)
  double b = 0.0;               // shift
  Vec z;                        // exterior points of the aux representative
  // Density of the aux semicircle law at x.
  double density(double x) const;
};

AuxEnsemble build_aux_ensemble(const Measure1D& rho_T1, double gamma_L, const Vec& y_T1, const WindowSpec& window,
                               double density_floor = 1e-3);

// predicted = (2K+1)/(N rho(midpoint)); actual = z_plus - z_minus.
std::pair<double, double> configuration_interval_length(double z_minus, double z_plus, const Measure1D& rho, int K,
                                                        int N);

struct SamplerOptions {
  bool metropolis = false;  // MALA correction
  bool strict_containment = false;
  std::uint64_t replica = 0;
  int max_halvings = 20;
  double max_violation_rate = 0.01;
};

struct GibbsSamples {
  Eigen::MatrixXd samples;  // window x n_samples
  Vec times;
  Vec alpha;                // equidistant points
  long steps = 0;
  long containment_events = 0;
  long halvings = 0;
  double acceptance_rate = 1.0;
  double violation_rate() const { return steps ? static_cast<double>(containment_events) / steps : 0.0; }
};

GibbsSamples sample_local_gibbs(const LocalMeasureSpec& spec, double burn_in_time, int n_samples, double stride,
                                double dt, std::uint64_t seed, const SamplerOptions& opt = {});

// min over configurations of min_i (1/N) sum_k (x_i - y_k)^-2. Without explicit
// configurations, x sweeps a 2001-point grid inside J.
double hessian_lower_bound(const LocalMeasureSpec& spec);
double hessian_lower_bound(const LocalMeasureSpec& spec, const std::vector<Vec>& configurations);

std::string local_measure_to_json(const LocalMeasureSpec& spec);

}  // namespace dbm
