#include "dbmlab/matrix_flow.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "dbmlab/rng.hpp"

namespace dbm {

SymmetryClass symmetry_from_beta(double beta) {
  if (beta == 1.0) return SymmetryClass::RealSymmetric;
  if (beta == 2.0) return SymmetryClass::ComplexHermitian;
  throw ValidationError("beta", "matrix models support beta in {1, 2}");
}

std::string to_string(EntryLaw law) {
  switch (law) {
    case EntryLaw::Gaussian: return "gaussian";
    case EntryLaw::Bernoulli: return "bernoulli";
    case EntryLaw::Uniform: return "uniform";
  }
  return "gaussian";
}

EntryLaw entry_law_from_string(const std::string& s) {
  if (s == "gaussian") return EntryLaw::Gaussian;
  if (s == "bernoulli") return EntryLaw::Bernoulli;
  if (s == "uniform") return EntryLaw::Uniform;
  throw ValidationError("entry_law", "unknown law '" + s + "'");
}

void WignerLikeSpec::validate() const {
  if (N < 1) throw ValidationError("N", "must be positive");
  if (S.rows() != N || S.cols() != N) throw ValidationError("S", "must be N x N");
  if (A.rows() != N || A.cols() != N) throw ValidationError("A", "must be N x N");
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 0.0) throw ValidationError("S", "not symmetric");
  if (S.minCoeff() < 0.0) throw ValidationError("S", "negative variance");
  if ((A - A.adjoint()).cwiseAbs().maxCoeff() > 0.0) throw ValidationError("A", "not Hermitian");
  if (symmetry == SymmetryClass::RealSymmetric && A.imag().cwiseAbs().maxCoeff() > 0.0)
    throw ValidationError("A", "must be real for the real-symmetric class");
}

bool WignerLikeSpec::equal_row_sums(double tol) const {
  const Vec r = row_sums();
  return r.maxCoeff() - r.minCoeff() <= tol * std::max(1.0, r.cwiseAbs().maxCoeff());
}

WignerLikeSpec gaussian_spec(int N, SymmetryClass sym) {
  WignerLikeSpec s;
  s.N = N;
  s.symmetry = sym;
  s.S = Eigen::MatrixXd::Constant(N, N, 1.0 / N);
  if (sym == SymmetryClass::RealSymmetric) s.S.diagonal().setConstant(2.0 / N);
  s.A = CMatrix::Zero(N, N);
  return s;
}

WignerLikeSpec deformed_wigner_spec(int N, SymmetryClass sym) {
  WignerLikeSpec s = gaussian_spec(N, sym);
  for (int i = 0; i < N; ++i) s.A(i, i) = (i % 2 == 0) ? 1.0 : -1.0;
  return s;
}

Eigen::MatrixXd two_block_profile(int N, int first_block, double a, double b) {
  if (first_block < 0 || first_block > N) throw ValidationError("first_block", "out of range");
  Eigen::MatrixXd S(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) S(i, j) = ((i < first_block) == (j < first_block) ? a : b) / N;
  return S;
}

namespace {

// Unit-variance draw of the requested law.
double unit_draw(const CounterRng& rng, EntryLaw law, std::uint64_t a, std::uint64_t b) {
  switch (law) {
    case EntryLaw::Gaussian: return rng.normal(a, b);
    case EntryLaw::Bernoulli: return rng.uniform(a, b) < 0.5 ? -1.0 : 1.0;
    case EntryLaw::Uniform: return std::sqrt(3.0) * (2.0 * rng.uniform(a, b) - 1.0);
  }
  return 0.0;
}

// Fills the upper triangle with variance S_ij (diagonal real) and mirrors it.
CMatrix random_hermitian(const Eigen::MatrixXd& S, SymmetryClass sym, EntryLaw law, const CounterRng& rng,
                         std::uint64_t tag) {
  const Eigen::Index N = S.rows();
  CMatrix H(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = i; j < N; ++j) {
      const auto key = static_cast<std::uint64_t>(i * N + j);
      const double sd = std::sqrt(S(i, j));
      Complex h;
      if (i == j || sym == SymmetryClass::RealSymmetric) {
        h = sd * unit_draw(rng, law, key, 2 * tag);
      } else {
        h = Complex(unit_draw(rng, law, key, 2 * tag), unit_draw(rng, law, key, 2 * tag + 1)) * (sd / std::sqrt(2.0));
      }
      H(i, j) = h;
      H(j, i) = std::conj(h);
    }
  }
  return H;
}

}  // namespace

CMatrix sample_matrix(const WignerLikeSpec& spec, std::uint64_t seed, std::uint64_t replica) {
  spec.validate();
  const CounterRng rng(seed, replica, streams::matrix_entries);
  return random_hermitian(spec.S, spec.symmetry, spec.law, rng, 0) + spec.A;
}

CMatrix gaussian_ensemble(int N, SymmetryClass sym, std::uint64_t seed, std::uint64_t replica, std::uint64_t stream) {
  const CounterRng rng(seed, replica, stream);
  return random_hermitian(gaussian_spec(N, sym).S, sym, EntryLaw::Gaussian, rng, 0);
}

CMatrix ou_step(const CMatrix& H, double dt, SymmetryClass sym, std::uint64_t seed, std::uint64_t replica,
                std::uint64_t step) {
  if (dt < 0.0) throw ValidationError("dt", "must be >= 0");
  if (dt == 0.0) return H;
  const int N = static_cast<int>(H.rows());
  // dB has the stationary-ensemble covariance times dt; the N^{-1/2} is inside S.
  const CounterRng rng(seed, replica, streams::ou_increments);
  const CMatrix dB = random_hermitian(gaussian_spec(N, sym).S * dt, sym, EntryLaw::Gaussian, rng, step + 1);
  return H * (1.0 - dt / 2.0) + dB;
}

CMatrix ou_closed_form(const CMatrix& H0, double t, SymmetryClass sym, std::uint64_t seed, std::uint64_t replica) {
  if (t < 0.0) throw ValidationError("t", "must be >= 0");
  if (t == 0.0) return H0;
  const CMatrix U = gaussian_ensemble(static_cast<int>(H0.rows()), sym, seed, replica, streams::ou_reference);
  return std::exp(-t / 2.0) * H0 + std::sqrt(-std::expm1(-t)) * U;
}

Vec eigenvalues(const CMatrix& H) {
  if (H.rows() != H.cols()) throw ValidationError("H", "not square");
  const double norm = std::max(1.0, H.cwiseAbs().maxCoeff());
  if ((H - H.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * norm) throw ValidationError("H", "not Hermitian");
  Vec ev;
  if (H.imag().cwiseAbs().maxCoeff() == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.real(), Eigen::EigenvaluesOnly);
    ev = es.eigenvalues();
  } else {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(H, Eigen::EigenvaluesOnly);
    ev = es.eigenvalues();
  }
  std::sort(ev.data(), ev.data() + ev.size());
  return ev;
}

Complex empirical_stieltjes(const Vec& spectrum, Complex z) {
  Complex acc = 0.0;
  for (Eigen::Index i = 0; i < spectrum.size(); ++i) acc += 1.0 / (spectrum[i] - z);
  return acc / static_cast<double>(spectrum.size());
}

LocalLawReport local_law_residuals(const std::vector<Vec>& spectra, const Measure1D& rho0, double t, double E_star,
                                   double Sigma, const Vec& eta_grid, const FlowSolverConfig& cfg, int energies) {
  if (spectra.empty()) throw InsufficientData("local_law_residuals needs at least one spectrum");
  const int N = static_cast<int>(spectra.front().size());
  for (Eigen::Index k = 0; k < eta_grid.size(); ++k)
    if (eta_grid[k] < 1.0 / N - 1e-15 || eta_grid[k] > 1.0) throw ValidationError("eta_grid", "must lie in [1/N, 1]");
  LocalLawReport r;
  r.energies = energies > 1 ? Vec(Vec::LinSpaced(energies, E_star - Sigma, E_star + Sigma)) : Vec(Vec::Constant(1, E_star));
  r.etas = eta_grid;
  r.count_threshold = 3.0 + std::log(static_cast<double>(N));
  FlowSolverConfig c = cfg;
  c.eta_star = 0.0;
  Eigen::MatrixXcd mt(r.energies.size(), r.etas.size());
  for (Eigen::Index e = 0; e < r.energies.size(); ++e)
    for (Eigen::Index k = 0; k < r.etas.size(); ++k)
      mt(e, k) = t > 0.0 ? solve_mt(rho0, t, {r.energies[e], r.etas[k]}, c)
                         : rho0.stieltjes(Complex(r.energies[e], r.etas[k]));
  // Classical locations of the evolved law for the counting discrepancy.
  Vec gamma;
  if (t > 0.0) {
    const Measure1D rho_t = flow_density(rho0, t, flow_support_grid(rho0, t, 4000), cfg);
    gamma = quantile_vector(rho_t, N);
  } else {
    gamma = quantile_vector(rho0, N);
  }
  const std::size_t R = spectra.size();
  r.scaled_residual.resize(static_cast<Eigen::Index>(R));
  r.count_discrepancy.resize(static_cast<Eigen::Index>(R));
  r.mean_residual.setZero(r.energies.size(), r.etas.size());
  auto count_in = [](const Vec& v, double a, double b) {
    return static_cast<double>(std::lower_bound(v.data(), v.data() + v.size(), b) -
                               std::lower_bound(v.data(), v.data() + v.size(), a));
  };
  for (std::size_t s = 0; s < R; ++s) {
    const Vec& lam = spectra[s];
    if (lam.size() != N) throw ValidationError("spectra", "all spectra must have the same size");
    double worst = 0.0, worst_count = 0.0;
    for (Eigen::Index e = 0; e < r.energies.size(); ++e) {
      for (Eigen::Index k = 0; k < r.etas.size(); ++k) {
        const double eta = r.etas[k];
        const double d = std::abs(empirical_stieltjes(lam, Complex(r.energies[e], eta)) - mt(e, k));
        r.mean_residual(e, k) += d / static_cast<double>(R);
        worst = std::max(worst, N * eta * d);
        const double a = r.energies[e] - eta / 2.0, b = r.energies[e] + eta / 2.0;
        worst_count = std::max(worst_count, std::abs(count_in(lam, a, b) - count_in(gamma, a, b)));
      }
    }
    r.scaled_residual[static_cast<Eigen::Index>(s)] = worst;
    r.count_discrepancy[static_cast<Eigen::Index>(s)] = worst_count;
  }
  r.fraction_residual_ok = (r.scaled_residual.array() <= r.residual_threshold).cast<double>().mean();
  r.fraction_count_ok = (r.count_discrepancy.array() <= r.count_threshold).cast<double>().mean();
  r.pass = r.fraction_residual_ok >= 0.9 && r.fraction_count_ok >= 0.9;
  return r;
}

std::string wigner_spec_to_json(const WignerLikeSpec& spec, const std::vector<std::uint64_t>& seeds) {
  nlohmann::json j;
  j["N"] = spec.N;
  j["beta"] = beta_of(spec.symmetry);
  j["entry_law"] = to_string(spec.law);
  const Vec rs = spec.row_sums();
  j["row_sum_min"] = rs.minCoeff();
  j["row_sum_max"] = rs.maxCoeff();
  j["equal_row_sums"] = spec.equal_row_sums();
  std::vector<double> diagA(static_cast<std::size_t>(spec.N));
  for (int i = 0; i < spec.N; ++i) diagA[static_cast<std::size_t>(i)] = spec.A(i, i).real();
  j["A_diagonal"] = diagA;
  j["A_offdiagonal_zero"] = (spec.A - CMatrix(spec.A.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
  j["seeds"] = seeds;
  return j.dump(2);
}

}  // namespace dbm
