#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dbmlab/measures.hpp"
#include "dbmlab/rng.hpp"
#include "dbmlab/semicircular_flow.hpp"

namespace dbm {

using CMatrix = Eigen::MatrixXcd;

enum class SymmetryClass { RealSymmetric = 1, ComplexHermitian = 2 };
enum class EntryLaw { Gaussian, Bernoulli, Uniform };

inline int beta_of(SymmetryClass c) { return static_cast<int>(c); }
SymmetryClass symmetry_from_beta(double beta);
std::string to_string(EntryLaw law);
EntryLaw entry_law_from_string(const std::string& s);

// H = W + A with independent entries of variance S_ij (up to symmetry) and mean A_ij.
struct WignerLikeSpec {
  int N = 0;
  SymmetryClass symmetry = SymmetryClass::ComplexHermitian;
  Eigen::MatrixXd S;  // variance profile
  CMatrix A;          // expectation
  EntryLaw law = EntryLaw::Gaussian;

  void validate() const;
  Vec row_sums() const { return S.rowwise().sum(); }
  bool equal_row_sums(double tol = 1e-12) const;
};

// Gaussian ensemble in the OU stationary convention: off-diagonal E|h|^2 = 1/N,
// diagonal variance 1/N (beta=2) or 2/N (beta=1).
WignerLikeSpec gaussian_spec(int N, SymmetryClass sym);
// Deformed Wigner: Gaussian ensemble plus A = diag(+1, -1, +1, ...).
WignerLikeSpec deformed_wigner_spec(int N, SymmetryClass sym);
// Two-block variance profile: S_ij = a/N within a block, b/N across; equal row sums iff halves are equal.
Eigen::MatrixXd two_block_profile(int N, int first_block, double a, double b);

CMatrix sample_matrix(const WignerLikeSpec& spec, std::uint64_t seed, std::uint64_t replica = 0);
CMatrix gaussian_ensemble(int N, SymmetryClass sym, std::uint64_t seed, std::uint64_t replica = 0,
                          std::uint64_t stream = streams::matrix_entries);

// Euler step h <- h (1 - dt/2) + N^{-1/2} dB; `step` keys the increments.
CMatrix ou_step(const CMatrix& H, double dt, SymmetryClass sym, std::uint64_t seed, std::uint64_t replica = 0,
                std::uint64_t step = 0);
// One exact sample of e^{-t/2} H0 + sqrt(1 - e^{-t}) U with U from gaussian_ensemble.
CMatrix ou_closed_form(const CMatrix& H0, double t, SymmetryClass sym, std::uint64_t seed,
                       std::uint64_t replica = 0);

// Sorted spectrum; throws ValidationError unless H is Hermitian within 1e-12 ||H||.
Vec eigenvalues(const CMatrix& H);

struct LocalLawReport {
  Vec energies, etas;
  // Per replica: max over (E, eta) of N eta |m_N - m_t|, and max counting discrepancy.
  Vec scaled_residual, count_discrepancy;
  Eigen::MatrixXd mean_residual;  // energies x etas, averaged |m_N - m_t|
  double residual_threshold = 3.0;
  double count_threshold = 0.0;
  double fraction_residual_ok = 0.0, fraction_count_ok = 0.0;
  bool pass = false;
};

// Empirical Stieltjes transform (1/N) sum 1/(lambda - z).
Complex empirical_stieltjes(const Vec& spectrum, Complex z);

LocalLawReport local_law_residuals(const std::vector<Vec>& spectra, const Measure1D& rho0, double t, double E_star,
                                   double Sigma, const Vec& eta_grid, const FlowSolverConfig& cfg = {},
                                   int energies = 11);

std::string wigner_spec_to_json(const WignerLikeSpec& spec, const std::vector<std::uint64_t>& seeds);

}  // namespace dbm
