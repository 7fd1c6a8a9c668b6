#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dbmlab/errors.hpp"
#include "dbmlab/measures.hpp"
#include "dbmlab/rng.hpp"

namespace dbm {

// Window I = {L-K, ..., L+K} of 0-based particle indices inside an N-particle system.
// Both neighbours L-K-1 and L+K+1 must exist; they bound the configuration interval.
struct WindowSpec {
  int N = 0;
  int L = 0;
  int K = 0;

  int first() const { return L - K; }
  int last() const { return L + K; }
  int size() const { return 2 * K + 1; }
  bool contains(int i) const { return i >= first() && i <= last(); }
  void validate() const;
  Eigen::VectorXi interior_labels() const;
  Eigen::VectorXi exterior_labels() const;
};

// Inclusive 0-based index range, used for the bulk set on which the small-scale
// regularization acts.
struct IndexRange {
  int lo = 0;
  int hi = -1;
  bool contains(int i) const { return i >= lo && i <= hi; }
};

struct ParticleConfiguration {
  Vec positions;
  Eigen::VectorXi labels;

  // Validates strict ordering and finiteness; default labels 0..n-1.
  static ParticleConfiguration ordered(Vec positions, Eigen::VectorXi labels = {});
  Eigen::Index size() const { return positions.size(); }
  bool is_ordered() const;
};

// Sampled path of a particle system. frames(:, k) holds the positions at times[k].
struct Trajectory {
  Vec times;
  Eigen::MatrixXd frames;
  Eigen::VectorXi labels;
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
  double beta = 2.0;
  double dt = 0.0;
  int stride = 1;
  std::string scheme = "euler-maruyama";
  long halvings = 0;            // bridge subdivisions performed
  long containment_events = 0;  // reflections at the window boundary
  bool flagged = false;         // replica left the good set; excluded downstream

  Eigen::Index particles() const { return frames.rows(); }
  Eigen::Index frame_count() const { return frames.cols(); }
  Vec frame(Eigen::Index k) const { return frames.col(k); }
  // Linear interpolation between stored frames; clamps outside the time range.
  Vec at(double t) const;
  // Index of the stored frame closest to t.
  Eigen::Index nearest_frame(double t) const;
  // Rows whose labels appear in `wanted`, in the order given.
  Trajectory select(const Eigen::VectorXi& wanted) const;
};

struct SdeOptions {
  int stride = 1;
  int max_halvings = 20;
  bool strict_containment = false;  // throw instead of reflecting at the window boundary
  std::uint64_t replica = 0;
  bool zero_noise = false;          // deterministic drift-only run
};

// Drift constant of the DBM noise, sqrt(2/(beta N)).
inline double dbm_noise_scale(double beta, int N) { return std::sqrt(2.0 / (beta * N)); }

// Default step min(0.1/N, 0.01 (min gap)^2 N).
double default_dt(const Vec& init, int N);

// One Euler-Maruyama step of the full DBM with standard-normal `noise` (scaled by
// sqrt(dt) internally). Ordering failures are retried on Brownian-bridge halves.
ParticleConfiguration step_dbm(const ParticleConfiguration& state, double dt, double beta, const Vec& noise,
                               std::uint64_t bridge_seed = 0, std::uint64_t step = 0, int max_halvings = 20);

Trajectory run_dbm(const ParticleConfiguration& init, double t0, double t1, double dt, double beta,
                   std::uint64_t seed, const SdeOptions& opt = {});

// Window dynamics with the exterior streamed from `exterior` (rows labelled by
// exterior indices). T1 is t0.
Trajectory run_localized(const Vec& x_init, const Trajectory& exterior, const WindowSpec& window, double upsilon,
                         double t0, double t1, double dt, double beta, std::uint64_t seed,
                         const SdeOptions& opt = {});

// Window dynamics with frozen exterior points tilde_gamma (ordered, one per exterior index).
Trajectory run_coupled_reference(const Vec& x_init, const Vec& tilde_gamma, const WindowSpec& window,
                                 double upsilon, double t0, double t1, double dt, double beta, std::uint64_t seed,
                                 const SdeOptions& opt = {});

// Positions at time t become positions - upsilon (t - T1).
Trajectory shift_process(const Trajectory& traj, double upsilon, double T1);

struct RegularizedRun {
  Trajectory hat;  // x-hat, the epsilon-regularized process
  Trajectory bar;  // x-bar, integrated jointly on the same noise and substeps
  double eps = 0.0;
};

// eps <= 0 selects eps = N^(-10 C1). The regularization acts on pairs inside `bulk`
// (an empty range means every index).
RegularizedRun run_regularized(const Vec& x_init, const Trajectory& exterior, const WindowSpec& window, double eps,
                               double C1, double upsilon, double t0, double t1, double dt, double beta,
                               std::uint64_t seed, const SdeOptions& opt = {}, IndexRange bulk = {0, -1});

// Signed regularization: +eps if j >= k, -eps otherwise, zero unless both lie in bulk.
inline double eps_signed(int j, int k, double eps, const IndexRange& bulk) {
  if (!bulk.contains(j) || !bulk.contains(k)) return 0.0;
  return j >= k ? eps : -eps;
}

// Coefficients of dv/dt = -sum_j B_ij (v_i - v_j) - W_i v_i + F1_i + F2_i for
// v = exp((t - T1p)/2) (x-hat - x-tilde), recorded per stored frame.
struct CouplingCoefficients {
  Vec times;
  std::vector<Eigen::MatrixXd> B;  // window x window, zero diagonal
  Eigen::MatrixXd W, F1, F2;       // window x frames
  Eigen::MatrixXd v;               // window x frames, the realized difference
  double eps = 0.0;
  WindowSpec window;
  double T1 = 0.0, T1p = 0.0, upsilon = 0.0;
  long zero_denominators = 0;  // flagged entries, coefficient set to zero
  long negative_W = 0;         // flagged, never clipped

  Eigen::Index frame_count() const { return times.size(); }
  Eigen::Index frame_at(double t) const;  // last frame with time <= t
};

struct CoupledPair {
  const Trajectory& bar;    // x-bar
  const Trajectory& hat;    // x-hat
  const Trajectory& tilde;  // x-tilde
};

CouplingCoefficients extract_coupling(const CoupledPair& pair, const Trajectory& exterior, const Vec& tilde_gamma,
                                      double eps, const WindowSpec& window, double upsilon, double T1, double T1p,
                                      IndexRange bulk = {0, -1});

struct VectorPath {
  Vec times;
  Eigen::MatrixXd values;  // rows: sites, cols: times
};

// Largest dt allowed by dt (max row sum of B + max W) <= 0.5 over [t0, t1].
double max_stable_dt(const CouplingCoefficients& c, double t0, double t1);

// Explicit Euler for the parabolic system; coefficients frozen on each recorded
// frame. Throws StepSizeError if dt breaks the stability bound.
VectorPath evolve_parabolic(const CouplingCoefficients& c, const Vec& v0, bool with_forcing, double t0, double t1,
                            double dt, int record_every = 1);

// ---- persistence ---------------------------------------------------------

void write_trajectory_binary(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory_binary(const std::string& path);
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_coupling_csv(std::ostream& os, const CouplingCoefficients& c, Eigen::Index frame);

}  // namespace dbm
