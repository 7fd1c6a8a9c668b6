#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dbmlab/errors.hpp"
#include "dbmlab/measures.hpp"
#include "dbmlab/semicircle.hpp"
#include "oracles.hpp"

using namespace dbm;

namespace {

// Uniform density on [0, 1].
Measure1D uniform01() { return Measure1D::gridded(Vec::LinSpaced(401, 0.0, 1.0), Vec::Ones(401)); }

Measure1D two_atoms() { return Measure1D::atomic((Vec(2) << -1.0, 1.0).finished(), (Vec(2) << 0.5, 0.5).finished()); }

// Grid that is fine near the origin and reaches far into the Cauchy tails.
Vec sinh_grid(double scale, double reach, int n) {
  const double u = std::asinh(reach / scale);
  Vec g = Vec::LinSpaced(n, -u, u);
  for (auto& x : g) x = scale * std::sinh(x);
  return g;
}

}  // namespace

TEST_SUITE("measures") {
  TEST_CASE("stieltjes transform of the semicircle at i") {
    const Complex m = stieltjes_transform(semicircle_measure(2000), {0.0, 1.0});
    CHECK(m.real() == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(m.imag() == doctest::Approx(0.618033988749895).epsilon(1e-9));
    CHECK(std::abs(m - oracle::quadratic_m({0.0, 1.0})) < 1e-9);
  }

  TEST_CASE("stieltjes transform of a single atom") {
    const Measure1D d = Measure1D::dirac(0.0);
    for (double E : {-2.0, 0.0, 0.7})
      for (double eta : {1e-3, 0.5}) {
        const Complex z(E, eta);
        CHECK(std::abs(stieltjes_transform(d, {E, eta}) + 1.0 / z) < 1e-14 * std::abs(1.0 / z));
      }
  }

  TEST_CASE("stieltjes transform of two symmetric atoms at 2i") {
    const Complex m = stieltjes_transform(two_atoms(), {0.0, 2.0});
    CHECK(m.real() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(m.imag() == doctest::Approx(0.4).epsilon(1e-15));
  }

  TEST_CASE("stieltjes transform on an atom is singular") {
    CHECK_THROWS_AS(stieltjes_transform(two_atoms(), {1.0, 0.0}), SingularEvaluation);
  }

  TEST_CASE("poisson smoothing of a point mass is the Cauchy kernel") {
    const double eta = 0.05;
    const Vec g = sinh_grid(0.02, 1e6, 6001);
    const Measure1D s = poisson_smooth(Measure1D::dirac(0.0), eta, g);
    for (double E : {-0.3, 0.0, 0.01, 0.2}) {
      const double cauchy = eta / (std::numbers::pi * (E * E + eta * eta));
      CHECK(s.density(E) * s.raw_mass() == doctest::Approx(cauchy).epsilon(1e-6));
    }
    CHECK(s.raw_mass() == doctest::Approx(1.0).epsilon(1e-6));
    REQUIRE(s.eta_used());
    CHECK(*s.eta_used() == eta);
  }

  TEST_CASE("poisson smoothing reports the mass lost to a narrow grid") {
    const double eta = 0.01;
    try {
      poisson_smooth(Measure1D::dirac(0.0), eta, Vec::LinSpaced(201, -5.0, 5.0));
      FAIL("expected MassLossError");
    } catch (const MassLossError& e) {
      // Mass outside [-5, 5] of the Cauchy law: 1 - (2/pi) atan(5/eta).
      CHECK(e.deficit() == doctest::Approx(1.0 - 2.0 / std::numbers::pi * std::atan(5.0 / eta)).epsilon(1e-10));
    }
  }

  TEST_CASE("poisson smoothing is a semigroup") {
    const Measure1D sc = semicircle_measure(2000);
    const Vec g = sinh_grid(0.5, 5e6, 12001);
    const Measure1D once = poisson_smooth(sc, 0.1, g);
    const Measure1D twice = poisson_smooth(poisson_smooth(sc, 0.05, g), 0.05, g);
    double worst = 0.0;
    for (double E = -2.0; E <= 2.0; E += 0.01)
      worst = std::max(worst, std::abs(once.density(E) - twice.density(E)));
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("poisson smoothing keeps an even measure even") {
    const Vec g = sinh_grid(0.1, 1e6, 4001);
    const Measure1D s = poisson_smooth(two_atoms(), 0.1, g);
    for (double E : {0.1, 0.5, 1.0, 1.7}) CHECK(s.density(E) == doctest::Approx(s.density(-E)).epsilon(1e-9));
  }

  TEST_CASE("hilbert transform of the semicircle") {
    const Measure1D sc = semicircle_measure(2000);
    CHECK(std::abs(hilbert_transform(sc, 0.0)) < 1e-9);
    CHECK(hilbert_transform(sc, 1.0) == doctest::Approx(-0.5).epsilon(1e-6));
    CHECK(hilbert_transform(sc, 1.0) == doctest::Approx(oracle::sc_real_part(1.0)).epsilon(1e-6));
    // Off the support, on an atomic-free closed form.
    CHECK(std::real(stieltjes_transform(sc, {3.0, 0.0})) == doctest::Approx(-0.381966011250105).epsilon(1e-9));
  }

  TEST_CASE("hilbert transform is the boundary value of Re m") {
    const Measure1D sc = semicircle_measure(2000);
    for (double E : {-1.3, 0.4, 1.5}) {
      const double T = hilbert_transform(sc, E);
      double prev = 1e300;
      for (double eta : {1e-2, 1e-3, 1e-4}) {
        const double d = std::abs(std::real(stieltjes_transform(sc, {E, eta})) - T);
        CHECK(d <= 2.0 * eta);
        CHECK(d <= prev);
        prev = d;
      }
    }
  }

  TEST_CASE("hilbert transform on an atom is singular") {
    CHECK_THROWS_AS(hilbert_transform(two_atoms(), -1.0), SingularEvaluation);
  }

  TEST_CASE("quantiles of the semicircle and the uniform law") {
    const Measure1D sc = semicircle_measure(2000);
    CHECK(std::abs(quantiles(sc, 2, 1).value) < 1e-9);
    CHECK(quantiles(sc, 4, 1).value == doctest::Approx(-0.807945506599034).epsilon(1e-8));
    CHECK(quantiles(sc, 4, 1).value == doctest::Approx(oracle::sc_quantile(0.25)).epsilon(1e-8));
    const Measure1D u = uniform01();
    const double expect[] = {0.25, 0.5, 0.75, 1.0};
    for (int k = 1; k <= 4; ++k) CHECK(quantiles(u, 4, k).value == doctest::Approx(expect[k - 1]).epsilon(1e-10));
  }

  TEST_CASE("quantile on a support gap takes the left endpoint and flags it") {
    Vec g = Vec::LinSpaced(301, -2.0, 2.0);
    Vec v(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) v[i] = std::abs(g[i]) >= 1.0 ? 1.0 : 0.0;
    const Measure1D m = Measure1D::gridded(g, v);
    const Quantile q = quantiles(m, 2, 1);
    CHECK(q.gap_quantile);
    CHECK(q.value == doctest::Approx(-1.0).epsilon(2e-2));
  }

  TEST_CASE("quantiles are monotone and hit their CDF level") {
    const Measure1D sc = semicircle_measure(2000);
    const int N = 50;
    const Vec q = quantile_vector(sc, N);
    for (int k = 1; k < N; ++k) {
      CHECK(q[k] > q[k - 1]);
      CHECK(sc.cdf(q[k - 1]) == doctest::Approx(static_cast<double>(k) / N).epsilon(1e-9));
    }
  }

  TEST_CASE("stieltjes inversion of a constant transform") {
    const Vec g = Vec::LinSpaced(101, -1.0, 1.0);
    const Measure1D m = stieltjes_invert(g, Eigen::VectorXcd::Constant(101, Complex(0.0, 1.0)), 0.0);
    CHECK(m.raw_mass() == doctest::Approx(2.0 / std::numbers::pi).epsilon(1e-12));
    CHECK(m.density(0.3) == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("stieltjes inversion recovers the semicircle") {
    const Measure1D sc = semicircle_measure(2000);
    const Vec g = Vec::LinSpaced(4001, -2.2, 2.2);
    Eigen::VectorXcd mv(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) mv[i] = stieltjes_transform(sc, {g[i], 1e-4});
    const Measure1D inv = stieltjes_invert(g, mv, 1e-4);
    double worst = 0.0;
    for (double E = -1.9; E <= 1.9; E += 0.01) worst = std::max(worst, std::abs(inv.density(E) - oracle::sc_density(E)));
    CHECK(worst <= 5e-3);
    CHECK(*inv.eta_used() == 1e-4);
  }

  TEST_CASE("stieltjes inversion of two atoms gives Cauchy bumps") {
    const double eta = 0.05;
    const Vec g = Vec::LinSpaced(2401, -3.0, 3.0);  // atoms on grid nodes
    Eigen::VectorXcd mv(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) mv[i] = stieltjes_transform(two_atoms(), {g[i], eta});
    const Measure1D inv = stieltjes_invert(g, mv, eta);
    const double peak = inv.density(1.0) * inv.raw_mass();
    CHECK(peak == doctest::Approx(0.5 / (std::numbers::pi * eta) + 0.5 * eta / (std::numbers::pi * (4 + eta * eta))).epsilon(1e-9));
    // Half width at half maximum is eta.
    CHECK(inv.density(1.0 + eta) / inv.density(1.0) == doctest::Approx(0.5).epsilon(1e-2));
    CHECK(inv.density(-1.0) == doctest::Approx(inv.density(1.0)).epsilon(1e-12));
  }

  TEST_CASE("stieltjes inversion rejects negative imaginary parts") {
    const Vec g = Vec::LinSpaced(3, -1.0, 1.0);
    CHECK_THROWS_AS(stieltjes_invert(g, Eigen::VectorXcd::Constant(3, Complex(0.0, -1e-6)), 0.0), ValidationError);
  }

  TEST_CASE("transform bounds on the upper half plane") {
    const Measure1D sc = semicircle_measure(500);
    for (double eta : {1e-3, 0.1, 2.0})
      for (double E : {-3.0, -1.0, 0.5, 2.5}) {
        const Complex m = stieltjes_transform(sc, {E, eta});
        CHECK(m.imag() > 0.0);
        CHECK(std::abs(m) <= 1.0 / eta + 1e-12);
        const Complex ma = stieltjes_transform(two_atoms(), {E, eta});
        CHECK(ma.imag() > 0.0);
        CHECK(std::abs(ma) <= 1.0 / eta + 1e-12);
      }
  }

  TEST_CASE("malformed measures are rejected") {
    CHECK_THROWS_AS(Measure1D::atomic((Vec(2) << 1.0, 0.0).finished(), (Vec(2) << 0.5, 0.5).finished()),
                    ValidationError);
    CHECK_THROWS_AS(Measure1D::atomic((Vec(2) << 0.0, 1.0).finished(), (Vec(2) << 0.5, 0.6).finished()),
                    ValidationError);
    CHECK_THROWS_AS(Measure1D::gridded((Vec(3) << 0.0, 0.0, 1.0).finished(), Vec::Ones(3)), ValidationError);
  }

  TEST_CASE("json round trip") {
    const Measure1D a = two_atoms();
    const Measure1D b = measure_from_json(measure_to_json(a));
    CHECK(b.is_atomic());
    CHECK(b.points() == a.points());
    CHECK(b.weights_or_values() == a.weights_or_values());
    CHECK_THROWS(measure_from_json(R"({"variant":"atomic","points":[0],"weights_or_values":[1],"x":1})"));
  }
}
