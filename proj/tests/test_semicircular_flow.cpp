#include <doctest.h>

#include <cmath>

#include "dbmlab/errors.hpp"
#include "dbmlab/semicircle.hpp"
#include "dbmlab/semicircular_flow.hpp"
#include "oracles.hpp"

using namespace dbm;

namespace {

Measure1D bimodal() { return Measure1D::atomic((Vec(2) << -1.0, 1.0).finished(), (Vec(2) << 0.5, 0.5).finished()); }

FlowSolverConfig exact() {
  FlowSolverConfig c;
  c.eta_star = 0.0;
  return c;
}

}  // namespace

TEST_SUITE("semicircular_flow") {
  TEST_CASE("semicircle is a fixed point of the flow at z = i") {
    const Complex m = solve_mt(semicircle_measure(2000), 1.0, {0.0, 1.0}, exact());
    CHECK(m.imag() == doctest::Approx(0.618033988749895).epsilon(1e-9));
    CHECK(std::abs(m.real()) < 1e-10);
  }

  TEST_CASE("point mass flowed to ln 2") {
    const Complex m = solve_mt(Measure1D::dirac(0.0), std::log(2.0), {0.0, 1.0}, exact());
    CHECK(m.imag() == doctest::Approx(0.732050807568877).epsilon(1e-12));
    CHECK(std::abs(m - oracle::quadratic_m({0.0, 1.0}, 0.5)) < 1e-12);
  }

  TEST_CASE("returned m satisfies the fixed point within tolerance") {
    FlowSolverConfig cfg = exact();
    for (double t : {0.1, 1.0, 3.0})
      for (double E : {-2.5, -0.5, 0.0, 1.9}) {
        FlowSolveInfo info;
        const Complex m = solve_mt(bimodal(), t, {E, 1e-3}, cfg, &info);
        CHECK(m.imag() > 0.0);
        CHECK(flow_residual(bimodal(), t, {E, 1e-3}, m) <= 10 * cfg.tol);
      }
  }

  TEST_CASE("two-atom flow matches an independent iteration") {
    const double t = 0.5;
    for (double E : {0.3, 0.9, 1.6}) {
      const Complex z(E, 1e-2);
      const Complex m = solve_mt(bimodal(), t, {E, 1e-2}, exact());
      CHECK(std::abs(m - oracle::two_atom_flow_m(std::exp(-t / 2), -std::expm1(-t), z)) < 1e-10);
    }
  }

  TEST_CASE("solver rejects bad configurations") {
    FlowSolverConfig c;
    c.tol = 1e-16;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.damping = 1.5;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    CHECK_THROWS_AS(solve_mt(bimodal(), 0.5, {0.0, 0.0}, exact()), DomainError);
  }

  TEST_CASE("flowed point mass is the scaled semicircle") {
    const double t = std::log(2.0);
    const Vec g = Vec::LinSpaced(801, -1.6, 1.6);
    const Measure1D rho = flow_density(Measure1D::dirac(0.0), t, g);
    CHECK(rho.density(0.0) == doctest::Approx(0.450158158078553).epsilon(1e-5));
    CHECK(rho.cdf(g[g.size() - 1]) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(rho.raw_mass() == doctest::Approx(1.0).epsilon(1e-4));
    for (double x : {-1.2, -0.4, 0.8}) CHECK(rho.density(x) == doctest::Approx(oracle::sc_density(x, 0.5)).epsilon(1e-4));
    CHECK(rho.variance() == doctest::Approx(0.5).epsilon(1e-4));
  }

  TEST_CASE("semicircle density is invariant under the flow") {
    const Vec g = Vec::LinSpaced(1001, -2.3, 2.3);
    const Measure1D rho = flow_density(semicircle_measure(2000), 0.7, g);
    double worst = 0.0;
    for (double E = -1.9; E <= 1.9; E += 0.005) worst = std::max(worst, std::abs(rho.density(E) - oracle::sc_density(E)));
    CHECK(worst <= 1e-4);
    CHECK(rho.cdf(g[g.size() - 1]) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(rho.raw_mass() == doctest::Approx(1.0).epsilon(1e-4));
  }

  TEST_CASE("variance of the flowed point mass") {
    for (double t : {0.2, 1.0, 2.0}) {
      const Measure1D rho = flow_density(Measure1D::dirac(0.0), t, flow_support_grid(Measure1D::dirac(0.0), t, 2001));
      CHECK(rho.variance() == doctest::Approx(-std::expm1(-t)).epsilon(1e-4));
    }
  }

  TEST_CASE("semigroup property of the flow") {
    const Measure1D mu = bimodal();
    for (double s : {0.2, 0.5})
      for (double t : {0.2, 0.5}) {
        const Measure1D direct = flow_density(mu, s + t, flow_support_grid(mu, s + t, 6001));
        const Measure1D first = flow_density(mu, s, flow_support_grid(mu, s, 6001));
        const Measure1D composed = flow_density(first, t, flow_support_grid(mu, s + t, 6001));
        // Bulk grid: the central 80% of each support component.
        double worst = 0.0;
        for (double x = -2.5; x <= 2.5; x += 0.01) {
          const double d = direct.density(x);
          if (d < 0.05) continue;
          worst = std::max(worst, std::abs(d - composed.density(x)));
        }
        CHECK(worst <= 2e-4);
      }
  }

  TEST_CASE("first two moments are continuous at t = 0") {
    const Measure1D mu = Measure1D::atomic((Vec(3) << -1.0, 0.5, 2.0).finished(), (Vec(3) << 0.3, 0.5, 0.2).finished());
    double C = 0.0;
    for (double t : {0.01, 0.02, 0.05}) {
      const Measure1D rho = flow_density(mu, t, flow_support_grid(mu, t, 6000));
      C = std::max(C, std::abs(rho.mean() - mu.mean()) / t);
      C = std::max(C, std::abs(rho.moment(2) - mu.moment(2)) / t);
    }
    CHECK(C <= 5.0);
  }

  TEST_CASE("quantile paths of the semicircle do not move") {
    const int N = 200;
    const Eigen::VectorXi idx = (Eigen::VectorXi(4) << 50, 80, 120, 150).finished();
    const Vec tg = Vec::LinSpaced(6, 0.0, 1.0);
    const QuantilePath qp = quantile_flow(semicircle_measure(2000), N, idx, tg);
    for (Eigen::Index r = 0; r < idx.size(); ++r)
      for (Eigen::Index k = 1; k < tg.size(); ++k)
        CHECK(std::abs(qp.gamma(r, k) - qp.gamma(r, k - 1)) / (tg[k] - tg[k - 1]) <= 1e-5);
  }

  TEST_CASE("median of a symmetric measure stays at zero") {
    // Two overlapping semicircles at +-0.8: symmetric with positive density at 0.
    const Vec g = Vec::LinSpaced(2001, -2.3, 2.3);
    Vec v(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i)
      v[i] = oracle::sc_density(g[i] - 0.8, 0.5) + oracle::sc_density(g[i] + 0.8, 0.5);
    const Eigen::VectorXi idx = Eigen::VectorXi::Constant(1, 100);
    const QuantilePath qp = quantile_flow(Measure1D::gridded(g, v), 200, idx, Vec::LinSpaced(4, 0.0, 0.6));
    for (Eigen::Index k = 0; k < qp.times.size(); ++k) CHECK(std::abs(qp.gamma(0, k)) < 1e-8);
  }

  TEST_CASE("quantile ODE agrees with direct quantiles for the bimodal start") {
    const int N = 200;
    const Eigen::VectorXi idx = (Eigen::VectorXi(6) << 11, 31, 52, 148, 171, 190).finished();
    FlowSolverConfig cfg;
    cfg.cdf_correction_interval = 0;
    cfg.density_floor = 0.0;
    const QuantilePath qp = quantile_flow(bimodal(), N, idx, (Vec(2) << 0.0, 0.3).finished(), cfg);
    const Measure1D rho = flow_density(bimodal(), 0.3, flow_support_grid(bimodal(), 0.3, 6000), cfg);
    for (Eigen::Index j = 0; j < idx.size(); ++j)
      CHECK(std::abs(qp.gamma(j, 1) - quantiles(rho, N, idx[j]).value) <= 1e-4);
  }

  TEST_CASE("quantile flow stops at the edge") {
    FlowSolverConfig cfg;
    cfg.density_floor = 0.1;  // the first quantile of N = 1000 sits where the density is about 0.05
    const Eigen::VectorXi idx = Eigen::VectorXi::Constant(1, 1);
    CHECK_THROWS_AS(quantile_flow(semicircle_measure(2000), 1000, idx, Vec::LinSpaced(3, 0.0, 0.1), cfg), DomainError);
  }

  TEST_CASE("mean drift") {
    const Measure1D sc = semicircle_measure(2000);
    for (double g : {-1.2, 0.0, 0.3, 1.5}) CHECK(std::abs(mean_drift(sc, g)) <= 1e-6);
    CHECK(std::abs(mean_drift(flow_density(bimodal(), 1.0, flow_support_grid(bimodal(), 1.0, 2001)), 0.0)) < 1e-9);
    const double c = 0.7;
    CHECK(mean_drift(semicircle_measure(2000, c), c) == doctest::Approx(-c / 2).epsilon(1e-8));
    CHECK_THROWS_AS(mean_drift(bimodal(), 1.0), SingularEvaluation);
  }

  TEST_CASE("burgers residual") {
    std::vector<Complex> zs;
    for (int i = 0; i < 21; ++i) zs.emplace_back(-3.0 + 0.3 * i, 0.5);
    CHECK(burgers_residual(semicircle_measure(2000), 1.0, 1e-3, zs, exact()) <= 1e-4);
    const double r = burgers_residual(Measure1D::dirac(0.0), 0.5, 1e-3, zs, exact(), 1e-3);
    CHECK(r <= 5.0 * (1e-6 + 1e-6));
    // Translation covariance. The confining drift moves a shifted start by
    // e^{-t/2} c, so the grid follows that point; the residual is compared at a
    // step small enough that the truncation error itself is below 1e-8.
    const double c = 0.37, t = 0.5;
    std::vector<Complex> zs_shift;
    for (auto z : zs) zs_shift.push_back(z + std::exp(-t / 2) * c);
    const double r0 = burgers_residual(Measure1D::dirac(0.0), t, 1e-4, zs, exact(), 1e-4);
    const double r2 = burgers_residual(Measure1D::dirac(c), t, 1e-4, zs_shift, exact(), 1e-4);
    CHECK(std::abs(r0 - r2) <= 1e-8);
  }

  TEST_CASE("density regularity report") {
    const auto rep = density_regularity_check(semicircle_measure(2000), 0.5, 1.0, -1.0, 1.0);
    CHECK(rep.min_density == doctest::Approx(0.275664447710896).epsilon(1e-4));
    CHECK(rep.max_density == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-4));
    CHECK_FALSE(rep.below_floor);
    const auto mid = density_regularity_check(semicircle_measure(2000), 0.5, 0.5, -1e-3, 1e-3, {}, 1, 3);
    CHECK(mid.max_abs_derivative <= 1e-3);
    const auto at0 = density_regularity_check(semicircle_measure(2000), 0.5, 0.5, 0.0, 0.0, {}, 1, 1);
    CHECK(at0.max_abs_derivative <= 1e-5);
    const auto bi = density_regularity_check(bimodal(), 0.1, 0.2, -0.5, 0.5);
    CHECK(bi.min_density < 1e-3);
    CHECK(bi.below_floor);
  }
}
