#include "dbmlab/dbm.hpp"

#include "sde_core.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>

namespace dbm {

static_assert(std::endian::native == std::endian::little, "binary trajectory I/O assumes a little-endian host");

void WindowSpec::validate() const {
  if (N < 3) throw ValidationError("window.N", "needs at least 3 particles");
  if (K < 0) throw ValidationError("window.K", "must be >= 0");
  if (first() < 1 || last() > N - 2)
    throw ValidationError("window.L", "window must leave at least one exterior particle on each side");
}

Eigen::VectorXi WindowSpec::interior_labels() const { return Eigen::VectorXi::LinSpaced(size(), first(), last()); }

Eigen::VectorXi WindowSpec::exterior_labels() const {
  Eigen::VectorXi out(N - size());
  int k = 0;
  for (int i = 0; i < N; ++i)
    if (!contains(i)) out[k++] = i;
  return out;
}

ParticleConfiguration ParticleConfiguration::ordered(Vec positions, Eigen::VectorXi labels) {
  if (labels.size() == 0) labels = Eigen::VectorXi::LinSpaced(positions.size(), 0, static_cast<int>(positions.size()) - 1);
  if (labels.size() != positions.size()) throw ValidationError("labels", "size mismatch with positions");
  ParticleConfiguration c{std::move(positions), std::move(labels)};
  if (!c.positions.allFinite()) throw ValidationError("positions", "non-finite entry");
  if (!c.is_ordered()) throw ValidationError("positions", "not strictly increasing");
  return c;
}

bool ParticleConfiguration::is_ordered() const {
  for (Eigen::Index i = 1; i < positions.size(); ++i)
    if (!(positions[i] > positions[i - 1])) return false;
  return true;
}

Vec Trajectory::at(double t) const {
  const Eigen::Index n = times.size();
  if (n == 0) throw InsufficientData("empty trajectory");
  if (t <= times[0]) return frames.col(0);
  if (t >= times[n - 1]) return frames.col(n - 1);
  const double* b = times.data();
  const Eigen::Index j = std::upper_bound(b, b + n, t) - b - 1;
  const double w = (t - times[j]) / (times[j + 1] - times[j]);
  if (w == 0.0) return frames.col(j);
  return frames.col(j) + w * (frames.col(j + 1) - frames.col(j));
}

Eigen::Index Trajectory::nearest_frame(double t) const {
  Eigen::Index best = 0;
  (times.array() - t).abs().minCoeff(&best);
  return best;
}

Trajectory Trajectory::select(const Eigen::VectorXi& wanted) const {
  Trajectory out = *this;
  out.frames.resize(wanted.size(), frames.cols());
  out.labels = wanted;
  for (Eigen::Index r = 0; r < wanted.size(); ++r) {
    Eigen::Index row = -1;
    for (Eigen::Index k = 0; k < labels.size(); ++k)
      if (labels[k] == wanted[r]) { row = k; break; }
    if (row < 0) throw ValidationError("labels", "label " + std::to_string(wanted[r]) + " not in trajectory");
    out.frames.row(r) = frames.row(row);
  }
  return out;
}

double default_dt(const Vec& init, int N) {
  double g = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 1; i < init.size(); ++i) g = std::min(g, init[i] - init[i - 1]);
  return std::min(0.1 / N, 0.01 * g * g * N);
}

namespace {

using detail::Violation;
using detail::Integrator;
using detail::first_disorder;
using detail::add_pair_repulsion;

struct FullModel {
  int N;
  Eigen::VectorXi labels;
  void drift(double, const Vec& x, Vec& out) const {
    out = -0.5 * x;
    add_pair_repulsion(x.data(), x.size(), 1.0 / N, out.data());
  }
  Violation check(const Vec& x, double) const { return first_disorder(x.data(), x.size(), labels.data()); }
  void contain(const Vec&, Vec&, double) const {}
};

// Exterior points at time t; either a streamed path or frozen values.
class Exterior {
 public:
  Exterior(const Trajectory* path, Vec frozen, const WindowSpec& w) : path_(path), frozen_(std::move(frozen)) {
    const Eigen::VectorXi ext = w.exterior_labels();
    if (path_) {
      if (path_->labels.size() != ext.size() || path_->labels != ext)
        throw ValidationError("exterior_path", "rows must be the exterior indices in increasing order");
    } else if (frozen_.size() != ext.size()) {
      throw ValidationError("tilde_gamma", "needs one point per exterior index");
    }
    below_ = w.first();  // exterior rows [0, below_) lie below the window
  }
  const Vec& at(double t) {
    if (!path_) return frozen_;
    if (t != cached_t_) {
      cache_ = path_->at(t);
      cached_t_ = t;
    }
    return cache_;
  }
  Eigen::Index below() const { return below_; }

 private:
  const Trajectory* path_;
  Vec frozen_, cache_;
  double cached_t_ = std::numeric_limits<double>::quiet_NaN();
  Eigen::Index below_;
};

// Window dynamics; `shifted` selects the x-bar drift -(x + u (t - T1))/2 over -x/2.
struct WindowModel {
  const WindowSpec& w;
  Exterior& ext;
  double upsilon, T1;
  bool shifted;
  Eigen::VectorXi labels;

  void drift(double t, const Vec& x, Vec& out) {
    const Vec& y = ext.at(t);
    const double invN = 1.0 / w.N;
    const double shift = shifted ? upsilon * (t - T1) : 0.0;
    out = -0.5 * (x.array() + shift) - upsilon;
    add_pair_repulsion(x.data(), x.size(), invN, out.data());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < y.size(); ++k) acc += 1.0 / (y[k] - x[i]);
      out[i] -= invN * acc;
    }
  }
  Violation check(const Vec& x, double t) {
    const Vec& y = ext.at(t);
    const Eigen::Index n = w.size();
    const Violation v = first_disorder(x.data(), n, labels.data());
    if (v.kind != Violation::Kind::None) return v;
    if (!(x[0] > y[ext.below() - 1])) return {Violation::Kind::Containment, w.first(), w.first() - 1};
    if (!(x[n - 1] < y[ext.below()])) return {Violation::Kind::Containment, w.last(), w.last() + 1};
    return {};
  }
  // Reflect to the midpoint between the pre-step position and the boundary particle.
  void contain(const Vec& prev, Vec& x, double t) {
    const Vec& y = ext.at(t);
    const Eigen::Index n = w.size();
    if (!(x[0] > y[ext.below() - 1])) x[0] = 0.5 * (prev[0] + y[ext.below() - 1]);
    if (!(x[n - 1] < y[ext.below()])) x[n - 1] = 0.5 * (prev[n - 1] + y[ext.below()]);
  }
};

// Joint (x-bar, x-hat) state; x-hat's interactions are evaluated on x-bar.
struct RegularizedModel {
  WindowModel bar;
  double eps;
  IndexRange bulk;

  void drift(double t, const Vec& s, Vec& out) {
    const Eigen::Index n = bar.w.size();
    const Vec xb = s.head(n);
    Vec db;
    bar.drift(t, xb, db);
    out.resize(2 * n);
    out.head(n) = db;
    const Vec& y = bar.ext.at(t);
    const double invN = 1.0 / bar.w.N;
    const Eigen::VectorXi ext_labels = exterior_labels_cache();
    for (Eigen::Index i = 0; i < n; ++i) {
      const int gi = bar.w.first() + static_cast<int>(i);
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const int gj = bar.w.first() + static_cast<int>(j);
        acc += 1.0 / (xb[i] - xb[j] + eps_signed(gi, gj, eps, bulk));
      }
      for (Eigen::Index k = 0; k < y.size(); ++k)
        acc += 1.0 / (xb[i] - y[k] + eps_signed(gi, ext_labels[k], eps, bulk));
      out[n + i] = invN * acc - 0.5 * (s[n + i] + bar.upsilon * (t - bar.T1)) - bar.upsilon;
    }
  }
  Violation check(const Vec& s, double t) { return bar.check(s.head(bar.w.size()), t); }
  void contain(const Vec& prev, Vec& s, double t) {
    const Eigen::Index n = bar.w.size();
    Vec xb = s.head(n);
    bar.contain(prev.head(n), xb, t);
    s.head(n) = xb;
  }
  const Eigen::VectorXi& exterior_labels_cache() {
    if (ext_labels_.size() == 0) ext_labels_ = bar.w.exterior_labels();
    return ext_labels_;
  }
  Eigen::VectorXi ext_labels_;
};

void check_window_init(const Vec& x, const WindowSpec& w) {
  w.validate();
  if (x.size() != w.size()) throw ValidationError("x_init", "size must equal the window size 2K+1");
  for (Eigen::Index i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1])) throw ValidationError("x_init", "not strictly increasing");
}

void check_in_interval(const Vec& x, const Vec& y, Eigen::Index below) {
  if (!(x[0] > y[below - 1]) || !(x[x.size() - 1] < y[below]))
    throw ValidationError("x_init", "not inside the configuration interval");
}

}  // namespace

ParticleConfiguration step_dbm(const ParticleConfiguration& state, double dt, double beta, const Vec& noise,
                               std::uint64_t bridge_seed, std::uint64_t step, int max_halvings) {
  if (!state.is_ordered()) throw ValidationError("state", "not strictly increasing");
  if (!(dt > 0.0)) throw ValidationError("dt", "must be positive");
  if (noise.size() != state.size()) throw ValidationError("noise", "length must equal N");
  const int N = static_cast<int>(state.size());
  FullModel model{N, state.labels};
  SdeOptions opt;
  opt.max_halvings = max_halvings;
  Integrator<FullModel> integ(model, dbm_noise_scale(beta, N), bridge_seed, opt, state.labels);
  Vec x = state.positions;
  integ.step(x, 0.0, dt, std::sqrt(dt) * noise, step);
  return {x, state.labels};
}

Trajectory run_dbm(const ParticleConfiguration& init, double t0, double t1, double dt, double beta,
                   std::uint64_t seed, const SdeOptions& opt) {
  if (!init.is_ordered()) throw ValidationError("init", "not strictly increasing");
  if (beta < 1.0) throw ValidationError("beta", "must be >= 1");
  const int N = static_cast<int>(init.size());
  FullModel model{N, init.labels};
  Integrator<FullModel> integ(model, dbm_noise_scale(beta, N), seed, opt, init.labels);
  Trajectory tr = integ.run(init.positions, t0, t1, dt, beta, init.labels, N);
  tr.scheme = "euler-maruyama/bridge-halving";
  return tr;
}

Trajectory run_localized(const Vec& x_init, const Trajectory& exterior, const WindowSpec& window, double upsilon,
                         double t0, double t1, double dt, double beta, std::uint64_t seed, const SdeOptions& opt) {
  check_window_init(x_init, window);
  if (beta < 1.0) throw ValidationError("beta", "must be >= 1");
  if (exterior.times[0] > t0 + 1e-12 || exterior.times[exterior.times.size() - 1] < t1 - 1e-12)
    throw ValidationError("exterior_path", "does not cover the time span");
  Exterior ext(&exterior, {}, window);
  check_in_interval(x_init, ext.at(t0), ext.below());
  WindowModel model{window, ext, upsilon, t0, true, window.interior_labels()};
  Integrator<WindowModel> integ(model, dbm_noise_scale(beta, window.N), seed, opt, model.labels);
  Trajectory tr = integ.run(x_init, t0, t1, dt, beta, model.labels, window.size());
  tr.scheme = "euler-maruyama/localized";
  return tr;
}

Trajectory run_coupled_reference(const Vec& x_init, const Vec& tilde_gamma, const WindowSpec& window,
                                 double upsilon, double t0, double t1, double dt, double beta, std::uint64_t seed,
                                 const SdeOptions& opt) {
  check_window_init(x_init, window);
  if (beta < 1.0) throw ValidationError("beta", "must be >= 1");
  for (Eigen::Index i = 1; i < tilde_gamma.size(); ++i)
    if (!(tilde_gamma[i] > tilde_gamma[i - 1])) throw ValidationError("tilde_gamma", "not strictly increasing");
  Exterior ext(nullptr, tilde_gamma, window);
  check_in_interval(x_init, tilde_gamma, ext.below());
  WindowModel model{window, ext, upsilon, t0, false, window.interior_labels()};
  Integrator<WindowModel> integ(model, dbm_noise_scale(beta, window.N), seed, opt, model.labels);
  Trajectory tr = integ.run(x_init, t0, t1, dt, beta, model.labels, window.size());
  tr.scheme = "euler-maruyama/coupled-reference";
  return tr;
}

Trajectory shift_process(const Trajectory& traj, double upsilon, double T1) {
  Trajectory out = traj;
  if (upsilon == 0.0) return out;
  for (Eigen::Index k = 0; k < out.frame_count(); ++k)
    out.frames.col(k).array() -= upsilon * (out.times[k] - T1);
  return out;
}

RegularizedRun run_regularized(const Vec& x_init, const Trajectory& exterior, const WindowSpec& window, double eps,
                               double C1, double upsilon, double t0, double t1, double dt, double beta,
                               std::uint64_t seed, const SdeOptions& opt, IndexRange bulk) {
  check_window_init(x_init, window);
  if (beta < 1.0) throw ValidationError("beta", "must be >= 1");
  if (eps <= 0.0) {
    if (!(C1 > 1.0)) throw ValidationError("C1", "must exceed 1");
    eps = std::pow(static_cast<double>(window.N), -10.0 * C1);
  }
  if (bulk.hi < bulk.lo) bulk = {0, window.N - 1};
  Exterior ext(&exterior, {}, window);
  check_in_interval(x_init, ext.at(t0), ext.below());
  const Eigen::VectorXi lab = window.interior_labels();
  RegularizedModel model{WindowModel{window, ext, upsilon, t0, true, lab}, eps, bulk, {}};
  Eigen::VectorXi joint(2 * lab.size());
  joint << lab, lab;  // both copies consume the same increments
  Integrator<RegularizedModel> integ(model, dbm_noise_scale(beta, window.N), seed, opt, joint);
  Vec s(2 * x_init.size());
  s << x_init, x_init;
  Trajectory both = integ.run(s, t0, t1, dt, beta, joint, s.size());
  RegularizedRun out;
  out.eps = eps;
  out.bar = both;
  out.bar.frames = both.frames.topRows(lab.size());
  out.bar.labels = lab;
  out.bar.scheme = "euler-maruyama/localized";
  out.hat = both;
  out.hat.frames = both.frames.bottomRows(lab.size());
  out.hat.labels = lab;
  out.hat.scheme = "euler-maruyama/regularized";
  return out;
}

// ---- coupling coefficients -------------------------------------------------

Eigen::Index CouplingCoefficients::frame_at(double t) const {
  const double* b = times.data();
  const Eigen::Index j = std::upper_bound(b, b + times.size(), t + 1e-12 * std::max(1.0, std::abs(t))) - b - 1;
  return std::clamp<Eigen::Index>(j, 0, times.size() - 1);
}

CouplingCoefficients extract_coupling(const CoupledPair& pair, const Trajectory& exterior, const Vec& tilde_gamma,
                                      double eps, const WindowSpec& window, double upsilon, double T1, double T1p,
                                      IndexRange bulk) {
  window.validate();
  const Trajectory &bar = pair.bar, &hat = pair.hat, &tilde = pair.tilde;
  const Eigen::Index n = window.size(), F = bar.frame_count();
  if (hat.frame_count() != F || tilde.frame_count() != F)
    throw ValidationError("pair", "trajectories must share their time grid");
  if (bar.particles() != n || hat.particles() != n || tilde.particles() != n)
    throw ValidationError("pair", "trajectories must cover the window");
  for (Eigen::Index k = 0; k < F; ++k)
    if (std::abs(bar.times[k] - tilde.times[k]) > 1e-12 || std::abs(bar.times[k] - hat.times[k]) > 1e-12)
      throw ValidationError("pair", "trajectories must share their time grid");
  if (bar.seed != tilde.seed || bar.seed != hat.seed)
    throw ValidationError("pair", "trajectories are not coupled (different noise seeds)");
  if (bulk.hi < bulk.lo) bulk = {0, window.N - 1};
  const Eigen::VectorXi ext_labels = window.exterior_labels();
  if (tilde_gamma.size() != ext_labels.size()) throw ValidationError("tilde_gamma", "needs one point per exterior index");

  CouplingCoefficients c;
  c.times = bar.times;
  c.eps = eps;
  c.window = window;
  c.T1 = T1;
  c.T1p = T1p;
  c.upsilon = upsilon;
  c.B.assign(static_cast<std::size_t>(F), Eigen::MatrixXd::Zero(n, n));
  c.W.setZero(n, F);
  c.F1.setZero(n, F);
  c.F2.setZero(n, F);
  c.v.setZero(n, F);
  const double invN = 1.0 / window.N;
  for (Eigen::Index f = 0; f < F; ++f) {
    const double t = c.times[f];
    const double e = std::exp((t - T1p) / 2.0);
    const Vec y = exterior.at(t);
    const auto xb = bar.frames.col(f), xh = hat.frames.col(f), xt = tilde.frames.col(f);
    Eigen::MatrixXd& B = c.B[static_cast<std::size_t>(f)];
    for (Eigen::Index i = 0; i < n; ++i) {
      const int gi = window.first() + static_cast<int>(i);
      const double di = xh[i] - xb[i];
      double f1 = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const int gj = window.first() + static_cast<int>(j);
        const double eij = eps_signed(gi, gj, eps, bulk);
        const double ab = (xb[i] - xb[j] + eij) * (xt[i] - xt[j]);
        if (ab == 0.0) {
          ++c.zero_denominators;
          continue;
        }
        B(i, j) = invN / ab;
        f1 += (di - (xh[j] - xb[j]) - eij) / ab;
      }
      double w = 0.0, f2 = 0.0;
      for (Eigen::Index k = 0; k < y.size(); ++k) {
        const double eik = eps_signed(gi, ext_labels[k], eps, bulk);
        const double cd = (xb[i] - y[k] + eik) * (xt[i] - tilde_gamma[k]);
        if (cd == 0.0) {
          ++c.zero_denominators;
          continue;
        }
        w += 1.0 / cd;
        f2 += (di + (y[k] - tilde_gamma[k]) - eik) / cd;
      }
      c.W(i, f) = invN * w;
      if (c.W(i, f) < 0.0) ++c.negative_W;
      c.F1(i, f) = e * (invN * f1 - 0.5 * upsilon * (t - T1));
      c.F2(i, f) = e * invN * f2;
      c.v(i, f) = e * (xh[i] - xt[i]);
    }
  }
  return c;
}

double max_stable_dt(const CouplingCoefficients& c, double t0, double t1) {
  double worst = 0.0;
  for (Eigen::Index f = c.frame_at(t0); f < c.frame_count() && c.times[f] <= t1 + 1e-12; ++f) {
    const double rows = c.B[static_cast<std::size_t>(f)].cwiseAbs().rowwise().sum().maxCoeff();
    worst = std::max(worst, rows + c.W.col(f).cwiseAbs().maxCoeff());
  }
  return worst > 0.0 ? 0.5 / worst : std::numeric_limits<double>::infinity();
}

VectorPath evolve_parabolic(const CouplingCoefficients& c, const Vec& v0, bool with_forcing, double t0, double t1,
                            double dt, int record_every) {
  const Eigen::Index n = c.window.size();
  if (v0.size() != n) throw ValidationError("v0", "size must equal the window size");
  if (!(t1 >= t0) || !(dt > 0.0)) throw ValidationError("t_span", "needs t1 >= t0 and dt > 0");
  if (record_every < 1) throw ValidationError("record_every", "must be >= 1");
  const long long steps = t1 > t0 ? static_cast<long long>(std::ceil((t1 - t0) / dt - 1e-9)) : 0;
  const double h = steps > 0 ? (t1 - t0) / static_cast<double>(steps) : 0.0;
  VectorPath out;
  const long long rec = steps / record_every + 1 + (steps % record_every ? 1 : 0);
  out.times.resize(rec);
  out.values.resize(n, rec);
  Eigen::Index r = 0;
  out.times[r] = t0;
  out.values.col(r++) = v0;
  Vec v = v0, next(n);
  for (long long s = 0; s < steps; ++s) {
    const double t = t0 + h * static_cast<double>(s);
    const Eigen::Index f = c.frame_at(t);
    const Eigen::MatrixXd& B = c.B[static_cast<std::size_t>(f)];
    const Vec rows = B.rowwise().sum();
    const double load = B.cwiseAbs().rowwise().sum().maxCoeff() + c.W.col(f).cwiseAbs().maxCoeff();
    if (h * load > 0.5)
      throw StepSizeError("evolve_parabolic: dt=" + std::to_string(h) + " exceeds the stability bound " +
                          std::to_string(0.5 / load) + " at t=" + std::to_string(t));
    next = v - h * (rows.cwiseProduct(v) - B * v + c.W.col(f).cwiseProduct(v));
    if (with_forcing) next += h * (c.F1.col(f) + c.F2.col(f));
    v.swap(next);
    if ((s + 1) % record_every == 0 || s + 1 == steps) {
      out.times[r] = t0 + h * static_cast<double>(s + 1);
      out.values.col(r++) = v;
    }
  }
  return out;
}

// ---- persistence -----------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'D', 'B', 'M', 'T', 'R', 'J', '0', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IntegrityError("truncated trajectory file " + path);
  return v;
}
}  // namespace

void write_trajectory_binary(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path + " for writing");
  os.write(kMagic, 8);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(traj.particles()));
  put<double>(os, traj.beta);
  put<double>(os, traj.dt);
  put<std::uint64_t>(os, traj.seed);
  put<std::uint64_t>(os, traj.replica);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(traj.frame_count()));
  for (Eigen::Index i = 0; i < traj.particles(); ++i) put<std::int64_t>(os, traj.labels[i]);
  for (Eigen::Index k = 0; k < traj.frame_count(); ++k) {
    put<double>(os, traj.times[k]);
    os.write(reinterpret_cast<const char*>(traj.frames.col(k).data()),
             static_cast<std::streamsize>(sizeof(double) * traj.particles()));
  }
  if (!os) throw Error("write failed for " + path);
}

Trajectory read_trajectory_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IntegrityError("cannot open trajectory file " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw IntegrityError("bad magic in " + path);
  Trajectory tr;
  const auto N = get<std::uint64_t>(is, path);
  tr.beta = get<double>(is, path);
  tr.dt = get<double>(is, path);
  tr.seed = get<std::uint64_t>(is, path);
  tr.replica = get<std::uint64_t>(is, path);
  const auto F = get<std::uint64_t>(is, path);
  if (N > (1u << 24) || F > (1ull << 32)) throw IntegrityError("implausible header in " + path);
  is.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(is.tellg());
  const std::uint64_t expect = 56 + 8 * N + F * 8 * (N + 1);
  if (size != expect) throw IntegrityError("size mismatch in " + path + " (truncated or padded)");
  is.seekg(56);
  tr.labels.resize(static_cast<Eigen::Index>(N));
  for (std::uint64_t i = 0; i < N; ++i) tr.labels[static_cast<Eigen::Index>(i)] = static_cast<int>(get<std::int64_t>(is, path));
  tr.times.resize(static_cast<Eigen::Index>(F));
  tr.frames.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(F));
  for (std::uint64_t k = 0; k < F; ++k) {
    tr.times[static_cast<Eigen::Index>(k)] = get<double>(is, path);
    if (!is.read(reinterpret_cast<char*>(tr.frames.col(static_cast<Eigen::Index>(k)).data()),
                 static_cast<std::streamsize>(8 * N)))
      throw IntegrityError("truncated trajectory file " + path);
  }
  return tr;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t,label,x\n";
  os.precision(17);
  for (Eigen::Index k = 0; k < traj.frame_count(); ++k)
    for (Eigen::Index i = 0; i < traj.particles(); ++i)
      os << traj.times[k] << ',' << traj.labels[i] << ',' << traj.frames(i, k) << '\n';
}

void write_coupling_csv(std::ostream& os, const CouplingCoefficients& c, Eigen::Index frame) {
  os << "t,kind,i,j,value\n";
  os.precision(17);
  const double t = c.times[frame];
  const Eigen::MatrixXd& B = c.B[static_cast<std::size_t>(frame)];
  const int base = c.window.first();
  for (Eigen::Index i = 0; i < B.rows(); ++i)
    for (Eigen::Index j = i + 1; j < B.cols(); ++j)
      os << t << ",B," << base + i << ',' << base + j << ',' << B(i, j) << '\n';
  for (Eigen::Index i = 0; i < B.rows(); ++i) {
    os << t << ",W," << base + i << ",," << c.W(i, frame) << '\n';
    os << t << ",F1," << base + i << ",," << c.F1(i, frame) << '\n';
    os << t << ",F2," << base + i << ",," << c.F2(i, frame) << '\n';
  }
}

}  // namespace dbm
