#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dbmlab/errors.hpp"

namespace dbm {

using Vec = Eigen::VectorXd;
using Complex = std::complex<double>;

// z = E + i*eta on the spectral axis.
struct ComplexPoint {
  double re = 0.0;
  double im = 0.0;
  Complex value() const { return {re, im}; }
};

struct GridQuadrature;

// Probability measure on the real line: sorted atoms with weights, or a density
// tabulated on a strictly increasing grid.
//
// Gridded densities are integrated with a per-cell cubic interpolant in the grid
// index (both position and value are interpolated in the index), so grids that are
// refined where the density is singular (e.g. Chebyshev nodes at square-root edges)
// keep high accuracy. Cells touching a zero value or an abrupt spacing change fall
// back to the linear interpolant.
class Measure1D {
 public:
  enum class Variant { Atomic, Gridded };

  static Measure1D atomic(Vec atoms, Vec weights);
  // Values are renormalized to unit mass; the mass before renormalization is kept.
  static Measure1D gridded(Vec grid, Vec values);
  static Measure1D dirac(double at) { return atomic(Vec::Constant(1, at), Vec::Ones(1)); }

  Variant variant() const { return variant_; }
  bool is_atomic() const { return variant_ == Variant::Atomic; }
  const Vec& points() const { return points_; }
  const Vec& weights_or_values() const { return values_; }
  double raw_mass() const { return raw_mass_; }
  std::optional<double> eta_used() const { return eta_used_; }
  Measure1D with_eta_used(double eta) const;

  // Closed hull of the support (first/last atom, or outermost cells carrying mass).
  double support_lo() const;
  double support_hi() const;

  double cdf(double x) const;
  double density(double x) const;  // Gridded only
  double moment(int k) const;
  double mean() const { return moment(1); }
  double variance() const;
  // Integral of f against the measure restricted to [a, b].
  double integrate(const std::function<double(double)>& f, double a, double b) const;

  // Raw transform kernels. stieltjes() takes any z off the support; with
  // principal_value=true and Im z = 0 it returns the principal value on the support.
  Complex stieltjes(Complex z, bool principal_value = false) const;
  Complex stieltjes_derivative(Complex z) const;

  // Affine image x -> scale * x + shift.
  Measure1D affine(double scale, double shift) const;

  const GridQuadrature& quadrature() const { return *quad_; }

 private:
  Measure1D() = default;
  Variant variant_ = Variant::Atomic;
  Vec points_, values_;
  double raw_mass_ = 1.0;
  std::optional<double> eta_used_;
  std::shared_ptr<const GridQuadrature> quad_;
};

// Per-cell interpolation data and Gauss nodes of a gridded density.
struct GridQuadrature {
  struct Cell {
    // Polynomials in the local index u in [0,1] (power basis, degree <= 3).
    Eigen::Vector4d y, rho;
    double mass = 0.0;
  };
  std::vector<Cell> cells;
  Vec cum;           // cumulative mass at each grid node (size n+1 cells -> nodes)
  Vec nodes, wts;    // flattened Gauss nodes and mass weights, 4 per cell
  std::size_t first_massive = 0, last_massive = 0;
};

// Gauss-Legendre nodes/weights on [0,1].
const std::array<double, 4>& gl4_nodes();
const std::array<double, 4>& gl4_weights();

// ---- operations ----------------------------------------------------------

Complex stieltjes_transform(const Measure1D& mu, ComplexPoint z);

struct PoissonOptions {
  double max_truncated_mass = 1e-6;
};
Measure1D poisson_smooth(const Measure1D& mu, double eta, const Vec& grid,
                         const PoissonOptions& opt = {});

double hilbert_transform(const Measure1D& mu, double E);

struct Quantile {
  double value = 0.0;
  bool gap_quantile = false;
};
// Smallest x with CDF(x) >= k/N.
Quantile quantiles(const Measure1D& mu, int N, int k);
// All N quantiles gamma_1..gamma_N.
Vec quantile_vector(const Measure1D& mu, int N);

Measure1D stieltjes_invert(const Vec& grid, const Eigen::VectorXcd& m_values, double eta_used);

// ---- persistence ---------------------------------------------------------

std::string measure_to_json(const Measure1D& mu);
Measure1D measure_from_json(const std::string& text);
void write_density_csv(std::ostream& os, const Measure1D& mu);

}  // namespace dbm
