#include <doctest.h>

#include <cmath>
#include <string>

#include "dbmlab/diagnostics.hpp"
#include "dbmlab/errors.hpp"
#include "dbmlab/local_gibbs.hpp"
#include "dbmlab/semicircle.hpp"

using namespace dbm;

namespace {

// Window around L with the exterior frozen at the symmetric levels (k + 1/2)/N.
LocalMeasureSpec symmetric_spec(int N, int L, int K) {
  LocalMeasureSpec s;
  s.N = N;
  s.window = {N, L, K};
  const Eigen::VectorXi ext = s.window.exterior_labels();
  s.exterior.resize(ext.size());
  for (Eigen::Index k = 0; k < ext.size(); ++k) s.exterior[k] = semicircle_quantile((ext[k] + 0.5) / N);
  s.validate();
  return s;
}

// Exterior at the semicircle classical locations.
LocalMeasureSpec quantile_spec(int N, int L, int K) {
  LocalMeasureSpec s;
  s.N = N;
  s.window = {N, L, K};
  const Vec g = semicircle_quantiles(N);
  const Eigen::VectorXi ext = s.window.exterior_labels();
  s.exterior.resize(ext.size());
  for (Eigen::Index k = 0; k < ext.size(); ++k) s.exterior[k] = g[ext[k]];
  s.validate();
  return s;
}

std::vector<double> row(const Eigen::MatrixXd& m, Eigen::Index i, Eigen::Index from, Eigen::Index to) {
  std::vector<double> v;
  for (Eigen::Index k = from; k < to; ++k) v.push_back(m(i, k));
  return v;
}

}  // namespace

TEST_SUITE("local_gibbs") {
  TEST_CASE("external potential without exterior points is the potential") {
    LocalMeasureSpec s;
    s.N = 10;
    s.convention = PotentialConvention::Window;
    for (double x : {-1.0, 0.3}) CHECK(external_potential(s, x) == doctest::Approx(0.5 * x * x));
    s.convention = PotentialConvention::Reference;
    CHECK(external_potential(s, 0.3) == doctest::Approx(0.25 * 0.09));
  }

  TEST_CASE("external potential of a single exterior point") {
    LocalMeasureSpec s;
    s.N = 1;
    s.convention = PotentialConvention::Window;
    s.exterior = Vec::Constant(1, 2.0);
    CHECK(external_potential(s, 0.0) == doctest::Approx(-1.38629436111989).epsilon(1e-12));
    CHECK_THROWS_AS(external_potential(s, 2.0), SingularEvaluation);
    s.eps_star = 1e-3;
    CHECK(std::isfinite(external_potential(s, 2.0)));
  }

  TEST_CASE("symmetric exterior gives a flat potential at the centre") {
    const LocalMeasureSpec s = symmetric_spec(201, 100, 3);
    const double h = 1e-5;
    CHECK(std::abs(external_potential(s, h) - external_potential(s, -h)) / (2 * h) <= 1e-8);
    CHECK(std::abs(external_potential_derivative(s, 0.0)) <= 1e-10);
  }

  TEST_CASE("analytic derivative matches finite differences") {
    for (double eps : {0.0, 0.05}) {
      LocalMeasureSpec s = quantile_spec(300, 150, 4);
      s.eps_star = eps;
      for (auto conv : {PotentialConvention::Window, PotentialConvention::Reference}) {
        s.convention = conv;
        const Vec a = s.equidistant();
        for (Eigen::Index j = 0; j < a.size(); ++j) {
          const double x = a[j], h = 1e-6;
          const double fd = (external_potential(s, x + h) - external_potential(s, x - h)) / (2 * h);
          CHECK(std::abs(fd - external_potential_derivative(s, x)) <= 1e-6);
        }
      }
    }
  }

  TEST_CASE("log_eps joins the logarithm smoothly") {
    for (double eps : {1e-3, 0.1, 0.5}) {
      CHECK(log_eps(eps, eps) == std::log(eps));
      CHECK(log_eps(2 * eps, eps) == std::log(2 * eps));
      const double h = eps * 1e-6;
      const double left = (log_eps(eps, eps) - log_eps(eps - h, eps)) / h;
      const double right = (log_eps(eps + h, eps) - log_eps(eps, eps)) / h;
      CHECK(left == doctest::Approx(1.0 / eps).epsilon(1e-5));
      CHECK(right == doctest::Approx(1.0 / eps).epsilon(1e-5));
      CHECK(log_eps_derivative(eps, eps) == doctest::Approx(1.0 / eps));
      for (double u = -3.0; u <= 1.0; u += 0.01) {
        const double x = u * eps, d = 1e-4 * eps;
        const double second = (log_eps_derivative(x + d, eps) - log_eps_derivative(x - d, eps)) / (2 * d);
        if (x + d <= eps) CHECK(std::abs(second) <= (1.0 + 1e-6) / (eps * eps));
      }
    }
    CHECK_THROWS_AS(log_eps(1.0, 0.0), ValidationError);
  }

  TEST_CASE("log_eps converges to the logarithm") {
    for (double eps : {1e-1, 1e-2, 1e-4}) {
      double worst = 0.0;
      for (double x = eps * std::exp(1.0); x <= 1.0; x *= 1.01) worst = std::max(worst, std::abs(log_eps(x, eps) - std::log(x)));
      CHECK(worst <= eps);
    }
  }

  TEST_CASE("reference points interpolate between y and z") {
    const WindowSpec w{400, 200, 2};
    const Eigen::VectorXi ext = w.exterior_labels();
    Vec y(ext.size()), z(ext.size());
    for (Eigen::Index k = 0; k < ext.size(); ++k) {
      y[k] = ext[k] / 400.0;
      z[k] = y[k] + 1e-4;
    }
    const RampSpec ramp{10.0, 20.0};
    const Vec g = build_reference_points(y, z, w, ramp);
    for (Eigen::Index k = 0; k < ext.size(); ++k) {
      const double d = std::abs(ext[k] - w.L);
      if (d <= 10.0) CHECK(g[k] == z[k]);
      else if (d >= 30.0) CHECK(g[k] == y[k]);
      else if (d == 20.0) CHECK(g[k] == doctest::Approx(0.5 * (y[k] + z[k])).epsilon(1e-15));
    }
    // A large jump in z against y breaks monotonicity inside the ramp.
    Vec bad = z;
    for (Eigen::Index k = 0; k < ext.size(); ++k)
      if (ext[k] > w.L) bad[k] = y[k] - 0.2;
    try {
      build_reference_points(y, bad, w, ramp);
      FAIL("expected an interpolation-order error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("interpolation-order") != std::string::npos);
    }
  }

  TEST_CASE("aux ensemble of the semicircle matches itself") {
    const int N = 1000;
    const WindowSpec w{N, 500, 20};
    const Vec g = semicircle_quantiles(N);
    const Eigen::VectorXi ext = w.exterior_labels();
    Vec y(ext.size());
    for (Eigen::Index k = 0; k < ext.size(); ++k) y[k] = g[ext[k]];
    const AuxEnsemble a = build_aux_ensemble(semicircle_measure(4000), g[w.L], y, w);
    CHECK(a.varsigma == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(std::abs(a.s - 1.0) <= 2.0 / w.K);
    CHECK(std::abs(a.b) <= 1e-10);
    const Eigen::Index lo = w.first() - 1, hi = w.first();
    CHECK(a.z[lo] == y[lo]);
    CHECK(a.z[hi] == y[hi]);
  }

  TEST_CASE("aux ensemble matches the density at the anchor") {
    const int N = 1000;
    const WindowSpec w{N, 420, 10};
    const double s2 = 2.0;
    const Measure1D rho = semicircle_measure(4000, 0.0, s2);
    const Eigen::VectorXi ext = w.exterior_labels();
    Vec y(ext.size());
    for (Eigen::Index k = 0; k < ext.size(); ++k) y[k] = quantiles(rho, N, ext[k] + 1).value;
    const double gL = quantiles(rho, N, w.L + 1).value;
    const AuxEnsemble a = build_aux_ensemble(rho, gL, y, w);
    CHECK(a.density(gL) == doctest::Approx(rho.density(gL)).epsilon(1e-5));
    CHECK(a.z[w.first() - 1] == y[w.first() - 1]);
    CHECK(a.z[w.first()] == y[w.first()]);
    CHECK_THROWS_AS(build_aux_ensemble(rho, 5.0, y, w), DomainError);
  }

  TEST_CASE("configuration interval length") {
    const int N = 1000, K = 20, L = 500;
    const Vec g = semicircle_quantiles(N);
    const Measure1D sc = semicircle_measure(4000);
    const auto [pred, act] = configuration_interval_length(g[L - K - 1], g[L + K + 1], sc, K, N);
    CHECK(std::abs(pred - act) <= 5.0 / N);
    const auto [pred2, act2] = configuration_interval_length(g[L - 2 * K - 1], g[L + 2 * K + 1], sc, 2 * K, N);
    CHECK(std::abs(pred2 - act2) <= 5.0 / N);
    CHECK(std::abs(pred2 - 2 * pred) <= 5.0 / N);
    // Uniform density: the predicted length is exact.
    const Measure1D u = Measure1D::gridded(Vec::LinSpaced(11, 0.0, 1.0), Vec::Ones(11));
    const auto [pu, au] = configuration_interval_length(0.3, 0.3 + (2.0 * K + 1) / N, u, K, N);
    CHECK(pu == doctest::Approx(au).epsilon(1e-12));
  }

  TEST_CASE("hessian lower bound") {
    const double b20 = hessian_lower_bound(quantile_spec(1000, 500, 20));
    const double b40 = hessian_lower_bound(quantile_spec(1000, 500, 40));
    CHECK(b20 >= 1000.0 / (10 * 20));
    CHECK(b40 / b20 >= 0.4);
    CHECK(b40 / b20 <= 0.6);
    LocalMeasureSpec one;
    one.N = 7;
    one.exterior = Vec::Constant(1, 0.75);
    CHECK(hessian_lower_bound(one, {Vec::Constant(1, 0.25)}) == doctest::Approx(1.0 / (7 * 0.25)).epsilon(1e-15));
  }

  TEST_CASE("single particle between symmetric walls is centred") {
    const LocalMeasureSpec s = symmetric_spec(201, 100, 0);
    const int n = 2000;
    const GibbsSamples gs = sample_local_gibbs(s, 5.0 / s.N, n, 1.0 / s.N, 1e-4, 3);
    const Vec x = gs.samples.row(0).transpose();
    // Batch means absorb the residual autocorrelation.
    const int B = 40, per = n / B;
    Vec bm(B);
    for (int b = 0; b < B; ++b) bm[b] = x.segment(b * per, per).mean();
    const double se = std::sqrt((bm.array() - bm.mean()).square().sum() / (B - 1) / B);
    CHECK(std::abs(x.mean()) <= 3.0 * se);
    CHECK(gs.violation_rate() <= 0.01);
  }

  TEST_CASE("window samples are rigid, repel and stay ordered") {
    const LocalMeasureSpec s = quantile_spec(400, 200, 20);
    const double KN = 20.0 / 400;
    SamplerOptions o;
    o.metropolis = true;
    const GibbsSamples gs = sample_local_gibbs(s, 5 * KN, 2000, KN, 1e-4, 7, o);
    const double tol = 5.0 * std::log(400.0) / 400;
    long far = 0;
    std::vector<double> gaps;
    for (Eigen::Index k = 0; k < gs.samples.cols(); ++k) {
      const Vec x = gs.samples.col(k);
      CHECK(x[0] > s.J_lo());
      CHECK(x[x.size() - 1] < s.J_hi());
      far += (x - gs.alpha).cwiseAbs().maxCoeff() > tol;
      for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
        REQUIRE(x[i + 1] > x[i]);
        gaps.push_back(s.N * semicircle_density(0.5 * (x[i] + x[i + 1])) * (x[i + 1] - x[i]));
      }
    }
    CHECK(static_cast<double>(far) / gs.samples.cols() <= 0.05);
    const DiagnosticsReport rep =
        level_repulsion_fit(Eigen::Map<const Vec>(gaps.data(), static_cast<Eigen::Index>(gaps.size())), 2.0);
    CHECK(std::abs(rep.statistics.at("slope") - 3.0) <= 0.3);
    // Stationarity: the two halves of each particle's record agree.
    const Eigen::Index h = gs.samples.cols() / 2;
    for (Eigen::Index i = 0; i < gs.samples.rows(); i += 10)
      CHECK(ks_two_sample(row(gs.samples, i, 0, h), row(gs.samples, i, h, 2 * h)) <= ks_bound95(h, h) * 1.5);
  }

  TEST_CASE("scaling the exterior and the potential rescales samples") {
    const double c = 1.7;
    LocalMeasureSpec a = quantile_spec(100, 50, 3);
    LocalMeasureSpec b = a;
    b.exterior *= c;
    b.V = Potential::quadratic(0.5 / (c * c));
    const double KN = 3.0 / 100;
    const GibbsSamples sa = sample_local_gibbs(a, 5 * KN, 800, KN, 1e-4, 41);
    // Time runs c^2 faster in the scaled system.
    const GibbsSamples sb = sample_local_gibbs(b, 5 * KN * c * c, 800, KN * c * c, 1e-4 * c * c, 42);
    for (Eigen::Index i = 0; i < sa.samples.rows(); ++i) {
      std::vector<double> xa = row(sa.samples, i, 0, 800), xb = row(sb.samples, i, 0, 800);
      for (auto& v : xb) v /= c;
      CHECK(ks_two_sample(xa, xb) <= ks_bound95(800, 800) * 1.5);
    }
  }

  TEST_CASE("spec serializes") {
    const LocalMeasureSpec s = quantile_spec(50, 25, 2);
    const auto j = nlohmann::json::parse(local_measure_to_json(s));
    CHECK(j.at("window").at("K") == 2);
    CHECK(j.at("exterior_points").size() == 45);
    CHECK(j.at("convention") == "reference");
  }
}
