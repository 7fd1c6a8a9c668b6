#include "dbmlab/semicircular_flow.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <ostream>

namespace dbm {

void FlowSolverConfig::validate() const {
  if (!(tol >= 1e-14)) throw ValidationError("tol", "must be >= 1e-14");
  if (max_iter <= 0) throw ValidationError("max_iter", "must be positive");
  if (!(damping > 0.0 && damping <= 1.0)) throw ValidationError("damping", "must lie in (0,1]");
  if (eta_star < 0.0 && eta_star != -1.0) throw ValidationError("eta_star", "must be >= 0 (or -1 for automatic)");
}

namespace {

double resolved_eta_star(const Measure1D& mu, const FlowSolverConfig& cfg) {
  if (cfg.eta_star >= 0.0) return cfg.eta_star;
  return 1e-6 * std::max(mu.support_hi() - mu.support_lo(), 1.0);
}

struct FixedPoint {
  const Measure1D& mu;
  double a, s;
  Complex z;

  Complex rhs(Complex m) const { return mu.stieltjes((z + s * m) / a) / a; }
  Complex drhs(Complex m) const { return mu.stieltjes_derivative((z + s * m) / a) * (s / (a * a)); }
  double residual(Complex m) const { return std::abs(m - rhs(m)); }
};

bool converged(double g, Complex m, double tol) { return g <= tol * std::max(1.0, std::abs(m)); }

// Newton with backtracking; keeps every accepted iterate in the upper half plane.
bool newton(const FixedPoint& fp, Complex& m, int max_iter, double tol, int& iters, double& res) {
  Complex g = m - fp.rhs(m);
  res = std::abs(g);
  double last_step = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    if (converged(res, m, tol)) return true;
    ++iters;
    const Complex dg = 1.0 - fp.drhs(m);
    const Complex step = -g / dg;
    last_step = std::abs(step);
    double lam = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls, lam *= 0.5) {
      const Complex mn = m + lam * step;
      if (!(mn.imag() > 0.0)) continue;
      const Complex gn = mn - fp.rhs(mn);
      if (std::abs(gn) < res || converged(std::abs(gn), mn, tol)) {
        m = mn;
        g = gn;
        res = std::abs(gn);
        accepted = true;
        break;
      }
    }
    // No decrease possible: the residual sits at the rounding floor of the map
    // (near an atom the denominators cancel), so a tiny Newton step means done.
    if (!accepted) return converged(res, m, tol) || last_step <= 1e-9 * std::max(1.0, std::abs(m));
  }
  return converged(res, m, tol) || last_step <= 1e-9 * std::max(1.0, std::abs(m));
}

// Damped fixed-point iteration; d falls back to 0.1 when the residual oscillates.
bool damped(const FixedPoint& fp, Complex& m, double d, int max_iter, double target, int& iters, double& res) {
  res = fp.residual(m);
  int growth = 0;
  for (int it = 0; it < max_iter; ++it) {
    if (res <= target) return true;
    ++iters;
    const Complex mn = (1.0 - d) * m + d * fp.rhs(m);
    if (!(mn.imag() > 0.0)) return false;
    const double rn = fp.residual(mn);
    if (rn > res) {
      if (++growth >= 3) d = std::min(d, 0.1);
    } else {
      growth = 0;
    }
    m = mn;
    res = rn;
  }
  return res <= target;
}

}  // namespace

Complex solve_free_convolution(const Measure1D& mu, double a, double s, Complex z, const FlowSolverConfig& cfg,
                               FlowSolveInfo* info, const Complex* guess) {
  cfg.validate();
  const double eta_star = resolved_eta_star(mu, cfg);
  z += Complex(0.0, eta_star);
  if (!(z.imag() > 0.0)) throw DomainError("solve_mt needs Im z + eta_star > 0");
  if (!(a > 0.0)) throw DomainError("scale must be positive");
  FlowSolveInfo local;
  FlowSolveInfo& inf = info ? *info : local;
  inf = {};
  if (s == 0.0) {
    const Complex m = mu.stieltjes(z / a) / a;
    inf.residual = 0.0;
    return m;
  }
  if (guess && guess->imag() > 0.0) {
    Complex m = *guess;
    FixedPoint fp{mu, a, s, z};
    double res = 0.0;
    if (newton(fp, m, 40, cfg.tol, inf.iterations, res) && m.imag() > 0.0) {
      inf.residual = res;
      return m;
    }
  }
  // eta-continuation from the top of the upper half plane.
  const double eta_t = z.imag();
  const double eta0 = std::max(eta_t, 1.0);
  FixedPoint fp0{mu, a, s, Complex(z.real(), eta0)};
  Complex m(0.0, 1.0);
  double res = 0.0;
  damped(fp0, m, cfg.damping, cfg.max_iter, 1e-6, inf.iterations, res);
  if (!newton(fp0, m, cfg.max_iter, cfg.tol, inf.iterations, res)) {
    if (!damped(fp0, m, 0.1, cfg.max_iter, cfg.tol * std::max(1.0, std::abs(m)), inf.iterations, res))
      throw ConvergenceError("solve_mt did not converge at the continuation start", res);
  }
  double eta = eta0;
  double factor = 4.0;
  inf.levels = 1;
  while (eta > eta_t) {
    const double next = std::max(eta / factor, eta_t);
    FixedPoint fp{mu, a, s, Complex(z.real(), next)};
    Complex trial = m;
    int it = 0;
    double r = 0.0;
    if (newton(fp, trial, 60, cfg.tol, it, r) && trial.imag() > 0.0) {
      inf.iterations += it;
      m = trial;
      res = r;
      eta = next;
      ++inf.levels;
      factor = std::min(4.0, factor * 1.5);
    } else {
      inf.iterations += it;
      factor = std::sqrt(factor);
      if (factor < 1.0001 || inf.iterations > 20 * cfg.max_iter)
        throw ConvergenceError("solve_mt lost the branch during eta-continuation at z=(" +
                               std::to_string(z.real()) + "," + std::to_string(eta) + "), s=" + std::to_string(s),
                               r);
    }
  }
  inf.residual = res;
  return m;
}

Complex solve_mt(const Measure1D& rho0, double t, ComplexPoint z, const FlowSolverConfig& cfg, FlowSolveInfo* info) {
  if (t < 0.0) throw DomainError("solve_mt needs t >= 0");
  return solve_free_convolution(rho0, std::exp(-t / 2.0), -std::expm1(-t), z.value(), cfg, info);
}

double flow_residual(const Measure1D& rho0, double t, Complex z, Complex m) {
  FixedPoint fp{rho0, std::exp(-t / 2.0), -std::expm1(-t), z};
  return fp.residual(m);
}

Measure1D free_convolution_density(const Measure1D& mu, double a, double s, const Vec& grid,
                                   const FlowSolverConfig& cfg) {
  const double eta_eff = std::max(resolved_eta_star(mu, cfg), 1e-12);
  FlowSolverConfig c = cfg;
  c.eta_star = eta_eff;
  Vec vals(grid.size());
  Complex prev(0.0, 0.0);
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    Complex m;
    try {
      m = solve_free_convolution(mu, a, s, Complex(grid[i], 0.0), c, nullptr, i > 0 ? &prev : nullptr);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("flow_density failed at E=" + std::to_string(grid[i]), e.residual());
    }
    prev = m;
    vals[i] = std::max(0.0, m.imag() / std::numbers::pi);
  }
  Measure1D out = Measure1D::gridded(grid, vals).with_eta_used(eta_eff);
  if (std::abs(out.raw_mass() - 1.0) > 1e-3)
    throw DomainError("flow_density: grid does not cover the evolved support (mass " +
                      std::to_string(out.raw_mass()) + ")");
  return out;
}

Measure1D flow_density(const Measure1D& rho0, double t, const Vec& grid, const FlowSolverConfig& cfg) {
  if (!(t > 0.0)) throw DomainError("flow_density needs t > 0");
  return free_convolution_density(rho0, std::exp(-t / 2.0), -std::expm1(-t), grid, cfg);
}

Vec flow_support_grid(const Measure1D& rho0, double t, int points, double pad) {
  const double a = std::exp(-t / 2.0), r = 2.0 * std::sqrt(-std::expm1(-t));
  const double lo = a * rho0.support_lo() - r, hi = a * rho0.support_hi() + r;
  const double w = hi - lo;
  return Vec::LinSpaced(points, lo - pad * w / 2.0, hi + pad * w / 2.0);
}

// ---- quantile dynamics ---------------------------------------------------

double QuantilePath::at(Eigen::Index row, double t) const {
  const Eigen::Index n = times.size();
  if (t <= times[0]) return gamma(row, 0);
  if (t >= times[n - 1]) return gamma(row, n - 1);
  const double* b = times.data();
  const Eigen::Index j = std::upper_bound(b, b + n, t) - b - 1;
  const double w = (t - times[j]) / (times[j + 1] - times[j]);
  return (1.0 - w) * gamma(row, j) + w * gamma(row, j + 1);
}

double quantile_velocity(const Measure1D& rho0, double t, double g, const FlowSolverConfig& cfg, Complex* warm) {
  FlowSolverConfig c = cfg;
  c.eta_star = resolved_eta_star(rho0, cfg);
  const Complex m = solve_free_convolution(rho0, std::exp(-t / 2.0), -std::expm1(-t), Complex(g, 0.0), c, nullptr,
                                           warm && warm->imag() > 0.0 ? warm : nullptr);
  if (warm) *warm = m;
  const double T = m.real();
  const double rho = m.imag() / std::numbers::pi;
  if (rho < cfg.density_floor)
    throw DomainError("quantile_flow: density " + std::to_string(rho) + " below floor at x=" + std::to_string(g) +
                      ", t=" + std::to_string(t));
  return -T - g / 2.0 - c.eta_star / (2.0 * std::numbers::pi) * T / rho;
}

namespace {

// CDF of the eta-regularized F_t[atoms] in closed form. With omega = z + s m and
// atoms scaled by a, the antiderivative of m_t is G(omega) - (s/2) m_a(omega)^2 with
// G(omega) = -sum_i w_i log(a y_i - omega).
double atomic_flow_cdf(const Measure1D& mu, double t, double x, double eta, const FlowSolverConfig& cfg,
                       Complex* warm) {
  const double a = std::exp(-t / 2.0), s = -std::expm1(-t);
  FlowSolverConfig c = cfg;
  c.eta_star = eta;
  const Complex m = solve_free_convolution(mu, a, s, Complex(x, 0.0), c, nullptr,
                                           warm && warm->imag() > 0.0 ? warm : nullptr);
  if (warm) *warm = m;
  const Complex omega = Complex(x, eta) + s * m;
  Complex G = 0.0;
  Complex ma = 0.0;
  for (Eigen::Index i = 0; i < mu.points().size(); ++i) {
    const Complex d = a * mu.points()[i] - omega;
    G -= mu.weights_or_values()[i] * std::log(d);
    ma += mu.weights_or_values()[i] / d;
  }
  return (G - 0.5 * s * ma * ma).imag() / std::numbers::pi;
}

Vec atomic_direct_quantiles(const Measure1D& mu, int N, const Eigen::VectorXi& idx, double t, double eta,
                            const FlowSolverConfig& cfg) {
  const double a = std::exp(-t / 2.0), r = 2.0 * std::sqrt(-std::expm1(-t));
  Vec out(idx.size());
  for (Eigen::Index j = 0; j < idx.size(); ++j) {
    const double level = static_cast<double>(idx[j]) / N;
    double lo = a * mu.support_lo() - r - 1.0, hi = a * mu.support_hi() + r + 1.0;
    Complex warm(0.0, 0.0);
    for (int it = 0; it < 80 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (atomic_flow_cdf(mu, t, mid, eta, cfg, &warm) >= level) hi = mid; else lo = mid;
    }
    out[j] = 0.5 * (lo + hi);
  }
  return out;
}

}  // namespace

Vec direct_flow_quantiles(const Measure1D& rho0, int N, const Eigen::VectorXi& indices, double t,
                          const FlowSolverConfig& cfg, int grid_points) {
  const double eta = resolved_eta_star(rho0, cfg);
  if (rho0.is_atomic()) return atomic_direct_quantiles(rho0, N, indices, t, eta, cfg);
  Vec out(indices.size());
  if (t == 0.0) {
    for (Eigen::Index j = 0; j < indices.size(); ++j) out[j] = quantiles(rho0, N, indices[j]).value;
    return out;
  }
  const Measure1D rho = flow_density(rho0, t, flow_support_grid(rho0, t, grid_points), cfg);
  for (Eigen::Index j = 0; j < indices.size(); ++j) out[j] = quantiles(rho, N, indices[j]).value;
  return out;
}

QuantilePath quantile_flow(const Measure1D& rho0, int N, const Eigen::VectorXi& indices, const Vec& t_grid,
                           const FlowSolverConfig& cfg) {
  cfg.validate();
  if (t_grid.size() < 1) throw ValidationError("t_grid", "needs at least one time");
  for (Eigen::Index j = 1; j < t_grid.size(); ++j)
    if (!(t_grid[j] > t_grid[j - 1])) throw ValidationError("t_grid", "times must be strictly increasing");
  QuantilePath path;
  path.indices = indices;
  path.times = t_grid;
  path.N = N;
  const Eigen::Index n = indices.size();
  path.gamma.resize(n, t_grid.size());
  Vec g = direct_flow_quantiles(rho0, N, indices, t_grid[0], cfg);
  path.gamma.col(0) = g;
  std::vector<Complex> warm(static_cast<std::size_t>(n), Complex(0.0, 0.0));
  auto velocity = [&](double t, const Vec& x, Vec& out) {
    out.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) out[j] = quantile_velocity(rho0, t, x[j], cfg, &warm[j]);
  };
  double t = t_grid[0];
  double dt = 1e-12;
  int accepted = 0;
  Vec k1, k2, mid;
  for (Eigen::Index col = 1; col < t_grid.size(); ++col) {
    const double t_end = t_grid[col];
    while (t < t_end) {
      dt = std::min(dt, t_end - t);
      velocity(t, g, k1);
      mid = g + 0.5 * dt * k1;
      velocity(t + 0.5 * dt, mid, k2);
      const double err = 0.5 * dt * (k2 - k1).cwiseAbs().maxCoeff();
      if (err <= cfg.ode_tol || dt < 1e-15) {
        g += dt * k2;
        t += dt;
        ++accepted;
        if (cfg.cdf_correction_interval > 0 && accepted % cfg.cdf_correction_interval == 0) {
          const Vec d = direct_flow_quantiles(rho0, N, indices, t, cfg);
          path.max_correction = std::max(path.max_correction, (d - g).cwiseAbs().maxCoeff());
          g = d;
          ++path.corrections;
        }
      }
      const double ratio = err > 0 ? 0.9 * std::sqrt(cfg.ode_tol / err) : 2.0;
      dt *= std::clamp(ratio, 0.2, 2.0);
    }
    path.gamma.col(col) = g;
  }
  return path;
}

double mean_drift(const Measure1D& rho_t1, double gamma_L) {
  if (gamma_L <= rho_t1.support_lo() || gamma_L >= rho_t1.support_hi())
    throw SingularEvaluation("mean_drift: gamma_L outside the support");
  return -hilbert_transform(rho_t1, gamma_L) - gamma_L / 2.0;
}

double burgers_residual(const Measure1D& rho0, double t, double dt, const std::vector<Complex>& z_grid,
                        const FlowSolverConfig& cfg, double dz) {
  if (!(t > 0.0) || !(dt > 0.0) || t - dt / 2.0 < 0.0) throw DomainError("burgers_residual needs t >= dt/2 > 0");
  if (dz <= 0.0) dz = dt;
  const double tp = t + dt / 2.0, tm = t - dt / 2.0;
  double worst = 0.0;
  auto m_at = [&](double tt, Complex z) { return solve_mt(rho0, tt, {z.real(), z.imag()}, cfg); };
  for (const Complex& z : z_grid) {
    const Complex dmdt = (m_at(tp, z) - m_at(tm, z)) / dt;
    auto f = [&](Complex zz) {
      const Complex m = m_at(t, zz);
      return m * (m + zz);
    };
    const Complex dfdz = (f(z + dz) - f(z - dz)) / (2.0 * dz);
    worst = std::max(worst, std::abs(dmdt - 0.5 * dfdz));
  }
  return worst;
}

DensityRegularityReport density_regularity_check(const Measure1D& rho0, double t_lo, double t_hi, double E_lo,
                                                 double E_hi, const FlowSolverConfig& cfg, int n_t, int n_E) {
  DensityRegularityReport r;
  r.floor = cfg.density_floor;
  r.min_density = std::numeric_limits<double>::infinity();
  const double h = 1e-4 * std::max(1.0, E_hi - E_lo);
  FlowSolverConfig c = cfg;
  c.eta_star = std::max(resolved_eta_star(rho0, cfg), 1e-12);
  auto rho_at = [&](double t, double E) {
    return solve_mt(rho0, t, {E, 0.0}, c).imag() / std::numbers::pi;
  };
  for (int it = 0; it < n_t; ++it) {
    const double t = n_t == 1 ? t_lo : t_lo + (t_hi - t_lo) * it / (n_t - 1);
    for (int ie = 0; ie < n_E; ++ie) {
      const double E = n_E == 1 ? E_lo : E_lo + (E_hi - E_lo) * ie / (n_E - 1);
      const double v = t > 0.0 ? rho_at(t, E) : rho0.density(E);
      r.min_density = std::min(r.min_density, v);
      r.max_density = std::max(r.max_density, v);
      const double d = t > 0.0 ? (rho_at(t, E + h) - rho_at(t, E - h)) / (2.0 * h)
                               : (rho0.density(E + h) - rho0.density(E - h)) / (2.0 * h);
      r.max_abs_derivative = std::max(r.max_abs_derivative, std::abs(d));
    }
  }
  r.below_floor = r.min_density < cfg.density_floor;
  return r;
}

void write_quantile_csv(std::ostream& os, const QuantilePath& path) {
  os << "t,index,gamma\n";
  os.precision(17);
  for (Eigen::Index c = 0; c < path.times.size(); ++c)
    for (Eigen::Index r = 0; r < path.indices.size(); ++r)
      os << path.times[c] << ',' << path.indices[r] << ',' << path.gamma(r, c) << '\n';
}

void write_density_snapshot_csv(std::ostream& os, double t, const Measure1D& rho) {
  os << "t,x,rho\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < rho.points().size(); ++i)
    os << t << ',' << rho.points()[i] << ',' << rho.weights_or_values()[i] << '\n';
}

}  // namespace dbm
