#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "dbmlab/dbm.hpp"
#include "dbmlab/diagnostics.hpp"
#include "dbmlab/errors.hpp"
#include "dbmlab/matrix_flow.hpp"
#include "dbmlab/semicircle.hpp"
#include "oracles.hpp"

using namespace dbm;

namespace {

// Exterior frozen at `y`, as a two-frame constant path over [t0, t1].
Trajectory frozen_path(const Vec& y, const Eigen::VectorXi& labels, double t0, double t1) {
  Trajectory tr;
  tr.times = (Vec(2) << t0, t1).finished();
  tr.frames.resize(y.size(), 2);
  tr.frames.col(0) = y;
  tr.frames.col(1) = y;
  tr.labels = labels;
  return tr;
}

Vec take(const Vec& v, const Eigen::VectorXi& idx) {
  Vec out(idx.size());
  for (Eigen::Index i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

// Batch-means standard error of the sample mean of x.
double batch_se(const std::vector<double>& x, int batches = 50) {
  const std::size_t m = x.size() / batches;
  std::vector<double> means;
  for (int b = 0; b < batches; ++b)
    means.push_back(std::accumulate(x.begin() + b * m, x.begin() + (b + 1) * m, 0.0) / m);
  const double mu = std::accumulate(means.begin(), means.end(), 0.0) / batches;
  double v = 0.0;
  for (double q : means) v += (q - mu) * (q - mu);
  return std::sqrt(v / (batches - 1) / batches);
}

CouplingCoefficients one_frame(const Eigen::MatrixXd& B, const Vec& W) {
  CouplingCoefficients c;
  const int n = static_cast<int>(B.rows());
  c.window = {n + 2, n / 2 + 1, (n - 1) / 2};
  c.times = Vec::Zero(1);
  c.B = {B};
  c.W = W;
  c.F1 = Eigen::MatrixXd::Zero(n, 1);
  c.F2 = Eigen::MatrixXd::Zero(n, 1);
  return c;
}

}  // namespace

TEST_SUITE("dbm") {
  TEST_CASE("single particle has the OU stationary variance") {
    SdeOptions o;
    const double dt = 0.01;
    const Trajectory tr = run_dbm(ParticleConfiguration::ordered(Vec::Zero(1)), 0.0, 1e5 * dt, dt, 2.0, 7, o);
    std::vector<double> sq;
    for (Eigen::Index k = tr.frame_count() / 100; k < tr.frame_count(); ++k) sq.push_back(tr.frames(0, k) * tr.frames(0, k));
    const double var = std::accumulate(sq.begin(), sq.end(), 0.0) / sq.size();
    // Euler bias is dt/4 on a unit variance.
    CHECK(std::abs(var - 1.0) <= 3.0 * batch_se(sq) + dt / 4);
  }

  TEST_CASE("noiseless two-particle gap reaches its fixed point") {
    SdeOptions o;
    o.zero_noise = true;
    const Vec x0 = (Vec(2) << -0.5, 0.5).finished();
    const Trajectory tr = run_dbm(ParticleConfiguration::ordered(x0), 0.0, 40.0, 1e-3, 2.0, 1, o);
    const Vec last = tr.frame(tr.frame_count() - 1);
    CHECK(std::abs((last[1] - last[0]) - 2.0 / std::sqrt(2.0)) <= 1e-6);
    // Transient against an RK4 solution of the gap ODE; Euler is first order.
    const Vec mid = tr.at(1.0);
    CHECK(std::abs((mid[1] - mid[0]) - oracle::two_particle_gap(1.0, 2, 1.0)) <= 1e-3);
  }

  TEST_CASE("step output is strictly ordered") {
    RandomStream rs(3, 0, 99);
    Vec x = semicircle_quantiles(30);
    ParticleConfiguration s = ParticleConfiguration::ordered(x);
    for (int k = 0; k < 200; ++k) {
      Vec noise(30);
      for (auto& v : noise) v = rs.normal();
      s = step_dbm(s, 0.01, 1.0, noise, 3, static_cast<std::uint64_t>(k));
      REQUIRE(s.is_ordered());
    }
  }

  TEST_CASE("unrecoverable collision names the pair") {
    const ParticleConfiguration s = ParticleConfiguration::ordered((Vec(2) << 0.0, 1.0).finished());
    const Vec noise = (Vec(2) << 1e3, -1e3).finished();
    try {
      step_dbm(s, 1.0, 1.0, noise, 0, 0, 0);
      FAIL("expected CollisionError");
    } catch (const CollisionError& e) {
      CHECK(e.first() == 0);
      CHECK(e.second() == 1);
    }
  }

  TEST_CASE("GUE start stays at the semicircle") {
    const int N = 200;
    const Vec x0 = eigenvalues(gaussian_ensemble(N, SymmetryClass::ComplexHermitian, 11));
    const Trajectory tr = run_dbm(ParticleConfiguration::ordered(x0), 0.0, 1.0, 0.1 / N, 2.0, 11);
    const Vec last = tr.frame(tr.frame_count() - 1);
    const double ks = ks_one_sample({last.data(), last.data() + N}, [](double x) { return semicircle_cdf(x); });
    CHECK(ks <= 0.08);
  }

  TEST_CASE("seed repeatability") {
    const Vec x0 = semicircle_quantiles(40);
    const auto a = run_dbm(ParticleConfiguration::ordered(x0), 0.0, 0.1, 1e-3, 2.0, 5);
    const auto b = run_dbm(ParticleConfiguration::ordered(x0), 0.0, 0.1, 1e-3, 2.0, 5);
    const auto c = run_dbm(ParticleConfiguration::ordered(x0), 0.0, 0.1, 1e-3, 2.0, 6);
    CHECK(a.frames == b.frames);
    CHECK(a.frames != c.frames);
    CHECK(shift_process(a, 0.0, 0.0).frames == a.frames);
  }

  TEST_CASE("shift process") {
    const auto a = run_dbm(ParticleConfiguration::ordered(semicircle_quantiles(10)), 0.0, 0.2, 1e-3, 2.0, 1);
    const auto s = shift_process(a, 0.3, 0.05);
    const auto back = shift_process(s, -0.3, 0.05);
    CHECK((back.frames - a.frames).cwiseAbs().maxCoeff() <= 1e-15);
    for (Eigen::Index k = 0; k < a.frame_count(); k += 17)
      for (Eigen::Index i = 1; i < 10; ++i)
        CHECK((s.frames(i, k) - s.frames(i - 1, k)) == doctest::Approx(a.frames(i, k) - a.frames(i - 1, k)).epsilon(1e-12));
    CHECK(s.frames(3, 0) == doctest::Approx(a.frames(3, 0) + 0.3 * 0.05).epsilon(1e-14));
  }

  TEST_CASE("relabeling and unrelabeling is the identity") {
    const Vec x0 = semicircle_quantiles(12);
    Eigen::VectorXi lab(12);
    for (int i = 0; i < 12; ++i) lab[i] = 100 + 3 * i;
    // Noise is keyed by label, so the pathwise identity is checked on the drift alone.
    SdeOptions o;
    o.zero_noise = true;
    const auto a = run_dbm(ParticleConfiguration::ordered(x0), 0.0, 0.05, 1e-3, 2.0, 4, o);
    const auto b = run_dbm(ParticleConfiguration::ordered(x0, lab), 0.0, 0.05, 1e-3, 2.0, 4, o);
    CHECK(b.labels == lab);
    const auto c = b.select(lab.reverse().eval());
    CHECK(c.frames.colwise().reverse().eval() == a.frames);
  }

  TEST_CASE("single window particle between symmetric walls has zero mean") {
    const int N = 21;
    const WindowSpec w{N, 10, 0};
    const Vec g = semicircle_quantiles(N);
    const Eigen::VectorXi ext = w.exterior_labels();
    // Symmetric exterior: reflect the lower half.
    Vec y = take(g, ext);
    for (Eigen::Index k = 0; k < y.size() / 2; ++k) y[y.size() - 1 - k] = -y[k];
    const double T = 200.0;
    const auto tr = run_localized(Vec::Zero(1), frozen_path(y, ext, 0.0, T), w, 0.0, 0.0, T, 1e-3, 2.0, 9);
    std::vector<double> x(tr.frames.data() + tr.frame_count() / 100, tr.frames.data() + tr.frame_count());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    CHECK(std::abs(mean) <= 3.0 * batch_se(x));
  }

  TEST_CASE("localized window stays rigid against a frozen quantile exterior") {
    const int N = 400, K = 20;
    const WindowSpec w{N, N / 2, K};
    const Vec g = semicircle_quantiles(N);
    const Eigen::VectorXi ext = w.exterior_labels(), in = w.interior_labels();
    const Trajectory path = frozen_path(take(g, ext), ext, 0.0, 0.1);
    const Vec gi = take(g, in);
    int ok = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto tr = run_localized(gi, path, w, 0.0, 0.0, 0.1, 0.1 / N, 2.0, s);
      const double sup = (tr.frames.colwise() - gi).cwiseAbs().maxCoeff();
      ok += sup <= 5.0 * std::log(N) / N;
    }
    CHECK(ok >= 48);
  }

  TEST_CASE("localized and reference dynamics coincide when their equations do") {
    const int N = 100, K = 5;
    const WindowSpec w{N, 50, K};
    const Vec g = semicircle_quantiles(N);
    const Eigen::VectorXi ext = w.exterior_labels();
    const Vec y = take(g, ext), x0 = take(g, w.interior_labels());
    const auto a = run_localized(x0, frozen_path(y, ext, 0.0, 0.2), w, 0.0, 0.0, 0.2, 1e-3, 2.0, 21);
    const auto a2 = run_localized(x0, frozen_path(y, ext, 0.0, 0.2), w, 0.0, 0.0, 0.2, 1e-3, 2.0, 21);
    const auto b = run_coupled_reference(x0, y, w, 0.0, 0.0, 0.2, 1e-3, 2.0, 21);
    CHECK(a.frames == a2.frames);
    CHECK(a.frames == b.frames);
    // A drift shift separates them while the noise stays shared.
    const auto c = run_coupled_reference(x0, y, w, 0.01, 0.0, 0.2, 1e-3, 2.0, 21);
    CHECK(a.frames != c.frames);
  }

  TEST_CASE("reference process: seed swap leaves the law unchanged and gaps relax on the K/N scale") {
    const int N = 200, K = 10;
    const WindowSpec w{N, 100, K};
    const Vec g = semicircle_quantiles(N);
    const Eigen::VectorXi ext = w.exterior_labels();
    const Vec y = take(g, ext);
    const Vec x0 = take(g, w.interior_labels());
    const double tau = static_cast<double>(K) / N;
    std::vector<double> xa, xb, gap2, gap4;
    for (std::uint64_t s = 0; s < 40; ++s) {
      const auto a = run_coupled_reference(x0, y, w, 0.0, 0.0, 4 * tau, 1e-3, 2.0, s);
      const auto b = run_localized(x0, frozen_path(y, ext, 0.0, 4 * tau), w, 0.0, 0.0, 4 * tau, 1e-3, 2.0, s + 1000);
      xa.push_back(a.frames(K, a.frame_count() - 1));
      xb.push_back(b.frames(K, b.frame_count() - 1));
      const Vec f2 = a.at(2 * tau), f4 = a.at(4 * tau);
      for (int i = 1; i < w.size(); ++i) gap2.push_back(N * (f2[i] - f2[i - 1])), gap4.push_back(N * (f4[i] - f4[i - 1]));
    }
    CHECK(ks_two_sample(xa, xb) <= ks_bound95(40, 40));
    CHECK(ks_two_sample(gap2, gap4) <= ks_bound95(gap2.size(), gap4.size()));
  }

  TEST_CASE("regularized process tracks x-bar for tiny eps") {
    const int N = 200, K = 5;
    const WindowSpec w{N, 100, K};
    const double T = static_cast<double>(K * K) / N;
    int ok = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Vec x0 = eigenvalues(gaussian_ensemble(N, SymmetryClass::ComplexHermitian, s));
      const auto lam = run_dbm(ParticleConfiguration::ordered(x0), 0.0, T, 0.1 / N, 2.0, s);
      const auto ext = lam.select(w.exterior_labels());
      const auto r = run_regularized(lam.frame(0).segment(w.first(), w.size()), ext, w, 1e-12, 1.5, 0.0, 0.0, T,
                                     0.1 / N, 2.0, s);
      ok += (r.hat.frames - r.bar.frames).cwiseAbs().maxCoeff() <= 1e-5;
    }
    CHECK(ok >= 19);
  }

  TEST_CASE("large eps switches the interaction off") {
    const int N = 50, K = 3;
    const WindowSpec w{N, 25, K};
    const Vec g = semicircle_quantiles(N);
    const Eigen::VectorXi ext = w.exterior_labels();
    SdeOptions o;
    o.zero_noise = true;
    const double eps = 1e3, T = 0.5;
    const Vec x0 = take(g, w.interior_labels());
    const auto r = run_regularized(x0, frozen_path(take(g, ext), ext, 0.0, T), w, eps, 1.5, 0.0, 0.0, T, 1e-3, 2.0, 1,
                                   o, {0, N - 1});
    // Each of the N - 1 terms is at most 1/eps, weighted by 1/N.
    const Vec last = r.hat.frame(r.hat.frame_count() - 1);
    CHECK((last - std::exp(-T / 2) * x0).cwiseAbs().maxCoeff() <= T / eps + 1e-3 * T);
  }

  TEST_CASE("regularization is antisymmetric") {
    const IndexRange bulk{10, 30};
    for (int j = 10; j <= 30; ++j)
      for (int k = 10; k <= 30; ++k)
        if (j != k) CHECK(eps_signed(j, k, 0.1, bulk) == -eps_signed(k, j, 0.1, bulk));
    CHECK(eps_signed(5, 20, 0.1, bulk) == 0.0);
  }

  TEST_CASE("coupling coefficients on identical paths") {
    const int N = 400, K = 20;
    const WindowSpec w{N, N / 2, K};
    const Vec g = semicircle_quantiles(N);
    const Eigen::VectorXi ext = w.exterior_labels();
    const Vec y = take(g, ext), x = take(g, w.interior_labels());
    const Trajectory ep = frozen_path(y, ext, 0.0, 1.0);
    Trajectory win = frozen_path(x, w.interior_labels(), 0.0, 1.0);
    const auto c = extract_coupling({win, win, win}, ep, y, 0.0, w, 0.0, 0.0, 0.0);
    const Eigen::MatrixXd& B = c.B[0];
    for (int i = 0; i < w.size(); ++i)
      for (int j = 0; j < w.size(); ++j) {
        if (i == j) continue;
        CHECK(B(i, j) == doctest::Approx(1.0 / (N * (x[i] - x[j]) * (x[i] - x[j]))).epsilon(1e-12));
        CHECK(B(i, j) >= 0.0);
      }
    const double rho = semicircle_density(x[K]);
    CHECK(B(K, K + 1) == doctest::Approx(N * rho * rho).epsilon(0.2));
    CHECK(c.W.minCoeff() >= 0.0);
    CHECK(c.negative_W == 0);
  }

  TEST_CASE("parabolic evolution: constants, two sites, contraction, conservation") {
    SUBCASE("constant data") {
      Eigen::MatrixXd B = Eigen::MatrixXd::Constant(5, 5, 0.7);
      B.diagonal().setZero();
      const auto c = one_frame(B, Vec::Zero(5));
      const auto p = evolve_parabolic(c, Vec::Constant(5, 0.3), false, 0.0, 1.0, 0.01);
      CHECK((p.values.colwise() - Vec::Constant(5, 0.3)).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("two sites") {
      const double b = 2.0, h = 1e-4 / b;
      // Windows have odd size; the third site is decoupled.
      Eigen::MatrixXd B = Eigen::MatrixXd::Zero(3, 3);
      B(0, 1) = B(1, 0) = b;
      const auto p = evolve_parabolic(one_frame(B, Vec::Zero(3)), (Vec(3) << 1.0, 0.0, 0.0).finished(), false, 0.0,
                                      1.0, h, 100);
      double discrete = 0.0, continuous = 0.0;
      for (Eigen::Index k = 0; k < p.times.size(); ++k) {
        const double d = p.values(0, k) - p.values(1, k);
        const double n = std::round(p.times[k] / h);
        discrete = std::max(discrete, std::abs(d - std::pow(1.0 - 2 * b * h, n)));
        continuous = std::max(continuous, std::abs(d - std::exp(-2 * b * p.times[k])));
      }
      CHECK(discrete <= 1e-12);
      // Global Euler error peaks at b h / e for a unit initial difference.
      CHECK(continuous <= b * h / std::exp(1.0) * 1.01);
    }
    SUBCASE("sup norm and sum") {
      RandomStream rs(1, 0, 5);
      Eigen::MatrixXd B(9, 9);
      for (int i = 0; i < 9; ++i)
        for (int j = i; j < 9; ++j) B(i, j) = B(j, i) = i == j ? 0.0 : rs.uniform();
      Vec W(9);
      for (auto& v : W) v = rs.uniform();
      Vec v0(9);
      for (auto& v : v0) v = rs.normal();
      const auto p = evolve_parabolic(one_frame(B, W), v0, false, 0.0, 2.0, 0.01);
      for (Eigen::Index k = 1; k < p.times.size(); ++k)
        CHECK(p.values.col(k).cwiseAbs().maxCoeff() <= p.values.col(k - 1).cwiseAbs().maxCoeff() + 1e-15);
      const auto q = evolve_parabolic(one_frame(B, Vec::Zero(9)), v0, false, 0.0, 2.0, 0.01);
      for (Eigen::Index k = 1; k < q.times.size(); ++k) {
        CHECK(std::abs(q.values.col(k).sum() - v0.sum()) <= 1e-12 * 2.0);
        CHECK(q.values.col(k).maxCoeff() <= q.values.col(k - 1).maxCoeff() + 1e-15);
        CHECK(q.values.col(k).minCoeff() >= q.values.col(k - 1).minCoeff() - 1e-15);
      }
    }
    SUBCASE("stability bound is enforced") {
      Eigen::MatrixXd B = Eigen::MatrixXd::Constant(3, 3, 10.0);
      B.diagonal().setZero();
      const auto c = one_frame(B, Vec::Zero(3));
      CHECK(max_stable_dt(c, 0.0, 1.0) == doctest::Approx(0.5 / 20.0));
      CHECK_THROWS_AS(evolve_parabolic(c, Vec::Ones(3), false, 0.0, 1.0, 0.05), StepSizeError);
    }
  }

  TEST_CASE("trajectory binary round trip and truncation") {
    const auto a = run_dbm(ParticleConfiguration::ordered(semicircle_quantiles(8)), 0.0, 0.05, 1e-3, 1.0, 3);
    const auto path = std::filesystem::temp_directory_path() / "dbmlab_test_traj.bin";
    write_trajectory_binary(path.string(), a);
    const auto b = read_trajectory_binary(path.string());
    CHECK(b.frames == a.frames);
    CHECK(b.times == a.times);
    CHECK(b.labels == a.labels);
    CHECK(b.seed == 3);
    CHECK(b.beta == 1.0);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    CHECK_THROWS_AS(read_trajectory_binary(path.string()), IntegrityError);
    std::filesystem::remove(path);
  }
}
