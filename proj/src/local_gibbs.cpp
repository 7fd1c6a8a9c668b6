#include "dbmlab/local_gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numbers>

#include "dbmlab/semicircle.hpp"
#include "sde_core.hpp"

namespace dbm {

// ---- potentials ------------------------------------------------------------

Potential Potential::quadratic(double a, double b) {
  if (!(a > 0.0)) throw ValidationError("potential.a", "quadratic coefficient must be positive");
  Potential p;
  p.a_ = a;
  p.b_ = b;
  return p;
}

Potential Potential::tabulated(Vec grid, Vec values) {
  if (grid.size() < 2 || grid.size() != values.size()) throw ValidationError("potential", "table needs >= 2 matching points");
  for (Eigen::Index i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ValidationError("potential.grid", "not strictly increasing");
  if (!values.allFinite()) throw ValidationError("potential.values", "non-finite entry");
  Potential p;
  p.quadratic_ = false;
  p.grid_ = std::move(grid);
  p.values_ = std::move(values);
  return p;
}

namespace {
Eigen::Index table_cell(const Vec& g, double x) {
  const Eigen::Index j = std::upper_bound(g.data(), g.data() + g.size(), x) - g.data() - 1;
  return std::clamp<Eigen::Index>(j, 0, g.size() - 2);
}
}  // namespace

double Potential::value(double x) const {
  if (quadratic_) return a_ * x * x + b_ * x;
  const Eigen::Index j = table_cell(grid_, x);
  const double w = (x - grid_[j]) / (grid_[j + 1] - grid_[j]);
  return (1.0 - w) * values_[j] + w * values_[j + 1];
}

double Potential::derivative(double x) const {
  if (quadratic_) return 2.0 * a_ * x + b_;
  const Eigen::Index j = table_cell(grid_, x);
  return (values_[j + 1] - values_[j]) / (grid_[j + 1] - grid_[j]);
}

void BetaEnsembleSpec::validate() const {
  if (N < 1) throw ValidationError("N", "must be positive");
  if (!(beta >= 1.0)) throw ValidationError("beta", "must be >= 1");
}

void LocalMeasureSpec::validate() const {
  if (N < 1) throw ValidationError("N", "must be positive");
  if (!(beta >= 1.0)) throw ValidationError("beta", "must be >= 1");
  if (window.N != N) throw ValidationError("window.N", "must equal N");
  window.validate();
  if (exterior.size() != N - window.size()) throw ValidationError("exterior", "needs one point per exterior index");
  for (Eigen::Index i = 1; i < exterior.size(); ++i)
    if (!(exterior[i] > exterior[i - 1])) throw ValidationError("exterior", "not strictly increasing");
  if (eps_star < 0.0) throw ValidationError("eps_star", "must be >= 0");
}

Vec LocalMeasureSpec::equidistant() const {
  const int n = window.size();
  const double lo = J_lo(), hi = J_hi();
  Vec a(n);
  for (int j = 0; j < n; ++j) a[j] = lo + (j + 1) * (hi - lo) / (n + 1);
  return a;
}

double log_eps(double x, double eps) {
  if (!(eps > 0.0)) throw ValidationError("eps", "must be positive");
  if (x >= eps) return std::log(x);
  const double d = x - eps;
  return std::log(eps) + d / eps - d * d / (2.0 * eps * eps);
}

double log_eps_derivative(double x, double eps) {
  if (!(eps > 0.0)) throw ValidationError("eps", "must be positive");
  if (x >= eps) return 1.0 / x;
  return 1.0 / eps - (x - eps) / (eps * eps);
}

namespace {

double log_abs(double r, double eps) {
  if (eps > 0.0) return log_eps(std::abs(r), eps);
  if (r == 0.0) throw SingularEvaluation("logarithm evaluated at an exterior point");
  return std::log(std::abs(r));
}

// d/dx log|x - y| with r = x - y.
double dlog_abs(double r, double eps) {
  if (eps > 0.0) return (r >= 0.0 ? 1.0 : -1.0) * log_eps_derivative(std::abs(r), eps);
  if (r == 0.0) throw SingularEvaluation("logarithm evaluated at an exterior point");
  return 1.0 / r;
}

double convention_factor(PotentialConvention c) { return c == PotentialConvention::Window ? 1.0 : 0.5; }

}  // namespace

double external_potential(const LocalMeasureSpec& spec, double x) {
  if (spec.N < 1) throw ValidationError("N", "must be positive");
  double acc = 0.0;
  for (Eigen::Index k = 0; k < spec.exterior.size(); ++k) acc += log_abs(x - spec.exterior[k], spec.eps_star);
  return convention_factor(spec.convention) * (spec.V.value(x) - 2.0 / spec.N * acc);
}

double external_potential_derivative(const LocalMeasureSpec& spec, double x) {
  if (spec.N < 1) throw ValidationError("N", "must be positive");
  double acc = 0.0;
  for (Eigen::Index k = 0; k < spec.exterior.size(); ++k) acc += dlog_abs(x - spec.exterior[k], spec.eps_star);
  return convention_factor(spec.convention) * (spec.V.derivative(x) - 2.0 / spec.N * acc);
}

// ---- reference points and the aux ensemble ---------------------------------

Vec build_reference_points(const Vec& y_T1, const Vec& z, const WindowSpec& window, RampSpec ramp) {
  window.validate();
  const Eigen::VectorXi ext = window.exterior_labels();
  if (y_T1.size() != ext.size() || z.size() != ext.size())
    throw ValidationError("exterior", "y and z need one point per exterior index");
  const double K = window.K;
  const double inner = ramp.inner >= 0.0 ? ramp.inner : std::min(K * K * K, (window.N - window.size()) / 4.0);
  const double width = ramp.ramp >= 0.0 ? ramp.ramp : K * K;
  Vec g(ext.size());
  for (Eigen::Index k = 0; k < ext.size(); ++k) {
    const double d = std::abs(ext[k] - window.L);
    double iota;
    if (d <= inner) iota = 1.0;
    else if (width <= 0.0 || d >= inner + width) iota = 0.0;
    else iota = 1.0 - (d - inner) / width;
    g[k] = iota * z[k] + (1.0 - iota) * y_T1[k];
  }
  for (Eigen::Index k = 1; k < g.size(); ++k)
    if (!(g[k] > g[k - 1]))
      throw ValidationError("interpolation-order", "reference points not increasing at exterior index " +
                                                       std::to_string(ext[k]));
  return g;
}

double AuxEnsemble::density(double x) const { return semicircle_density((x - b) / varsigma_prime, 1.0) / varsigma_prime; }

AuxEnsemble build_aux_ensemble(const Measure1D& rho_T1, double gamma_L, const Vec& y_T1, const WindowSpec& window,
                               double density_floor) {
  window.validate();
  const Eigen::VectorXi ext = window.exterior_labels();
  if (y_T1.size() != ext.size()) throw ValidationError("y_T1", "needs one point per exterior index");
  if (rho_T1.is_atomic()) throw ValidationError("rho_T1", "needs a density");
  const double rho_L = rho_T1.density(gamma_L);
  if (!(rho_L >= density_floor))
    throw DomainError("aux-construction: density " + std::to_string(rho_L) + " below floor at gamma_L");
  const int N = window.N;
  const Vec gsc = semicircle_quantiles(N);  // gsc[i] = quantile of index i+1
  AuxEnsemble a;
  a.varsigma = semicircle_density(gsc[window.L], 1.0) / rho_L;
  const Eigen::Index lo = window.first() - 1, hi = window.first();  // exterior rows bounding J
  const double Jy = y_T1[hi] - y_T1[lo];
  const double Jyt = a.varsigma * (gsc[window.last() + 1] - gsc[window.first() - 1]);
  a.s = Jyt / Jy;
  a.varsigma_prime = a.varsigma / a.s;
  a.b = y_T1[lo] - a.varsigma_prime * gsc[window.first() - 1];
  a.z.resize(ext.size());
  for (Eigen::Index k = 0; k < ext.size(); ++k) a.z[k] = a.varsigma_prime * gsc[ext[k]] + a.b;
  a.z[lo] = y_T1[lo];
  a.z[hi] = y_T1[hi];
  return a;
}

std::pair<double, double> configuration_interval_length(double z_minus, double z_plus, const Measure1D& rho, int K,
                                                        int N) {
  if (!(z_plus > z_minus)) throw ValidationError("z", "z_plus must exceed z_minus");
  const double mid = 0.5 * (z_minus + z_plus);
  const double r = rho.density(mid);
  if (!(r > 0.0)) throw DomainError("configuration_interval_length: zero density at the midpoint");
  return {(2.0 * K + 1.0) / (N * r), z_plus - z_minus};
}

// ---- sampler -----------------------------------------------------------------

namespace {

// Exterior force (1/N) sum_k d/dx log|x - y_k| and potential (1/N) sum_k log|x - y_k|
// on J: the nearest exterior points exactly, the rest through a Chebyshev fit.
class ExteriorField {
 public:
  ExteriorField(const Vec& y, Eigen::Index below, double lo, double hi, int N, double eps, int near = 64,
                int degree = 40)
      : y_(y), lo_(lo), hi_(hi), invN_(1.0 / N), eps_(eps) {
    n0_ = std::max<Eigen::Index>(0, below - near);
    n1_ = std::min<Eigen::Index>(y.size(), below + near);
    if (n0_ == 0 && n1_ == y.size()) return;
    const int n = degree + 1;
    Vec fx(n), px(n);
    for (int j = 0; j < n; ++j) {
      const double x = map(std::cos(std::numbers::pi * (j + 0.5) / n));
      double f = 0.0, p = 0.0;
      for (Eigen::Index k = 0; k < y.size(); ++k) {
        if (k >= n0_ && k < n1_) continue;
        f += dlog_abs(x - y[k], eps);
        p += log_abs(x - y[k], eps);
      }
      fx[j] = f * invN_;
      px[j] = p * invN_;
    }
    cf_ = coefficients(fx);
    cp_ = coefficients(px);
  }

  double force(double x) const {
    double acc = cf_.size() ? clenshaw(cf_, x) : 0.0;
    for (Eigen::Index k = n0_; k < n1_; ++k) acc += invN_ * dlog_abs(x - y_[k], eps_);
    return acc;
  }
  double potential(double x) const {
    double acc = cp_.size() ? clenshaw(cp_, x) : 0.0;
    for (Eigen::Index k = n0_; k < n1_; ++k) acc += invN_ * log_abs(x - y_[k], eps_);
    return acc;
  }

 private:
  double map(double u) const { return 0.5 * (lo_ + hi_) + 0.5 * (hi_ - lo_) * u; }
  static Vec coefficients(const Vec& v) {
    const Eigen::Index n = v.size();
    Vec c(n);
    for (Eigen::Index m = 0; m < n; ++m) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) s += v[j] * std::cos(std::numbers::pi * m * (j + 0.5) / n);
      c[m] = 2.0 * s / n;
    }
    c[0] *= 0.5;
    return c;
  }
  double clenshaw(const Vec& c, double x) const {
    const double u = (2.0 * x - lo_ - hi_) / (hi_ - lo_);
    double b1 = 0.0, b2 = 0.0;
    for (Eigen::Index m = c.size() - 1; m >= 1; --m) {
      const double b0 = 2.0 * u * b1 - b2 + c[m];
      b2 = b1;
      b1 = b0;
    }
    return u * b1 - b2 + c[0];
  }

  const Vec& y_;
  double lo_, hi_, invN_, eps_;
  Eigen::Index n0_ = 0, n1_ = 0;
  Vec cf_, cp_;
};

struct GibbsModel {
  const LocalMeasureSpec& spec;
  const ExteriorField& field;
  Eigen::VectorXi labels;

  void drift(double, const Vec& x, Vec& out) const {
    const Eigen::Index n = x.size();
    out.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = -0.5 * spec.V.derivative(x[i]) + field.force(x[i]);
    if (spec.eps_star > 0.0) {
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          if (j != i) out[i] += dlog_abs(x[i] - x[j], spec.eps_star) / spec.N;
    } else {
      detail::add_pair_repulsion(x.data(), n, 1.0 / spec.N, out.data());
    }
  }
  detail::Violation check(const Vec& x, double) const {
    const detail::Violation v = detail::first_disorder(x.data(), x.size(), labels.data());
    if (v.kind != detail::Violation::Kind::None) return v;
    if (!(x[0] > spec.J_lo())) return {detail::Violation::Kind::Containment, labels[0], labels[0] - 1};
    if (!(x[x.size() - 1] < spec.J_hi()))
      return {detail::Violation::Kind::Containment, labels[x.size() - 1], labels[x.size() - 1] + 1};
    return {};
  }
  void contain(const Vec& prev, Vec& x, double) const {
    if (!(x[0] > spec.J_lo())) x[0] = 0.5 * (prev[0] + spec.J_lo());
    const Eigen::Index n = x.size();
    if (!(x[n - 1] < spec.J_hi())) x[n - 1] = 0.5 * (prev[n - 1] + spec.J_hi());
  }

  // Energy E with target density exp(-beta N E).
  double energy(const Vec& x) const {
    double e = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      e += 0.5 * spec.V.value(x[i]) - field.potential(x[i]);
      for (Eigen::Index j = i + 1; j < x.size(); ++j) e -= log_abs(x[j] - x[i], spec.eps_star) / spec.N;
    }
    return e;
  }
};

GibbsSamples run_mala(const LocalMeasureSpec& spec, GibbsModel& model, double burn_in, int n_samples, double stride,
                      double dt, std::uint64_t seed, const SamplerOptions& opt) {
  GibbsSamples out;
  out.alpha = spec.equidistant();
  Vec x = out.alpha;
  const double sigma = dbm_noise_scale(spec.beta, spec.N);
  const double bN = spec.beta * spec.N;
  const CounterRng noise(seed, opt.replica, streams::gibbs), coin(seed, opt.replica, streams::metropolis);
  const long burn_steps = std::lround(burn_in / dt), stride_steps = std::max(1L, std::lround(stride / dt));
  const long total = burn_steps + stride_steps * n_samples;
  out.samples.resize(x.size(), n_samples);
  out.times.resize(n_samples);
  Vec fx, fy, y(x.size());
  model.drift(0.0, x, fx);
  double ex = model.energy(x);
  long accepted = 0;
  for (long s = 0; s < total; ++s) {
    for (Eigen::Index i = 0; i < x.size(); ++i)
      y[i] = x[i] + dt * fx[i] + sigma * std::sqrt(dt) * noise.normal(static_cast<std::uint64_t>(s), model.labels[i]);
    bool ok = model.check(y, 0.0).kind == detail::Violation::Kind::None;
    if (ok) {
      model.drift(0.0, y, fy);
      const double ey = model.energy(y);
      const double q_fwd = (y - x - dt * fx).squaredNorm(), q_bwd = (x - y - dt * fy).squaredNorm();
      const double log_ratio = -bN * (ey - ex) - (q_bwd - q_fwd) / (2.0 * sigma * sigma * dt);
      if (std::log(coin.uniform(static_cast<std::uint64_t>(s), 0)) < log_ratio) {
        x = y;
        fx = fy;
        ex = ey;
        ++accepted;
      }
    }
    if (s + 1 > burn_steps && (s + 1 - burn_steps) % stride_steps == 0) {
      const long k = (s + 1 - burn_steps) / stride_steps - 1;
      out.samples.col(k) = x;
      out.times[k] = (s + 1) * dt;
    }
  }
  out.steps = total;
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(total);
  return out;
}

}  // namespace

GibbsSamples sample_local_gibbs(const LocalMeasureSpec& spec, double burn_in_time, int n_samples, double stride,
                                double dt, std::uint64_t seed, const SamplerOptions& opt) {
  spec.validate();
  const double relax = static_cast<double>(spec.window.K > 0 ? spec.window.K : 1) / spec.N;
  if (burn_in_time < 5.0 * relax - 1e-15) throw ValidationError("burn_in_time", "must be >= 5 K/N");
  if (stride < relax - 1e-15) throw ValidationError("stride", "must be >= K/N");
  if (n_samples < 1) throw ValidationError("n_samples", "must be positive");
  if (!(dt > 0.0) || dt > stride) throw ValidationError("dt", "must lie in (0, stride]");
  const ExteriorField field(spec.exterior, spec.window.first(), spec.J_lo(), spec.J_hi(), spec.N, spec.eps_star);
  GibbsModel model{spec, field, spec.window.interior_labels()};
  if (opt.metropolis) return run_mala(spec, model, burn_in_time, n_samples, stride, dt, seed, opt);

  GibbsSamples out;
  out.alpha = spec.equidistant();
  SdeOptions so;
  so.replica = opt.replica;
  so.max_halvings = opt.max_halvings;
  so.strict_containment = opt.strict_containment;
  const double sigma = dbm_noise_scale(spec.beta, spec.N);
  const long burn_steps = std::max(1L, std::lround(burn_in_time / dt));
  so.stride = static_cast<int>(burn_steps);
  detail::Integrator<GibbsModel> burn(model, sigma, seed, so, model.labels, streams::gibbs);
  const Trajectory b = burn.run(out.alpha, 0.0, burn_steps * dt, dt, spec.beta, model.labels, out.alpha.size());
  const long stride_steps = std::max(1L, std::lround(stride / dt));
  so.stride = static_cast<int>(stride_steps);
  detail::Integrator<GibbsModel> run(model, sigma, seed, so, model.labels, streams::gibbs);
  const double t0 = burn_steps * dt;
  const Trajectory r = run.run(b.frames.col(b.frame_count() - 1), t0, t0 + stride_steps * n_samples * dt, dt,
                               spec.beta, model.labels, out.alpha.size());
  out.samples = r.frames.rightCols(n_samples);
  out.times = r.times.tail(n_samples);
  out.steps = burn_steps + stride_steps * n_samples;
  out.containment_events = b.containment_events + r.containment_events;
  out.halvings = b.halvings + r.halvings;
  if (out.violation_rate() > opt.max_violation_rate)
    throw ContainmentError("sample_local_gibbs: containment violation rate " + std::to_string(out.violation_rate()) +
                           " exceeds " + std::to_string(opt.max_violation_rate));
  return out;
}

double hessian_lower_bound(const LocalMeasureSpec& spec, const std::vector<Vec>& configurations) {
  if (configurations.empty()) throw InsufficientData("hessian_lower_bound needs at least one configuration");
  double best = std::numeric_limits<double>::infinity();
  for (const Vec& x : configurations)
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < spec.exterior.size(); ++k) {
        const double d = x[i] - spec.exterior[k];
        acc += 1.0 / (d * d);
      }
      best = std::min(best, acc / spec.N);
    }
  return best;
}

double hessian_lower_bound(const LocalMeasureSpec& spec) {
  spec.validate();
  const int n = 2001;
  Vec x(n);
  const double lo = spec.J_lo(), hi = spec.J_hi();
  for (int j = 0; j < n; ++j) x[j] = lo + (j + 1) * (hi - lo) / (n + 1);
  return hessian_lower_bound(spec, std::vector<Vec>{x});
}

std::string local_measure_to_json(const LocalMeasureSpec& spec) {
  nlohmann::json j;
  j["N"] = spec.N;
  j["beta"] = spec.beta;
  j["window"] = {{"L", spec.window.L}, {"K", spec.window.K}};
  j["exterior_points"] = std::vector<double>(spec.exterior.data(), spec.exterior.data() + spec.exterior.size());
  if (spec.V.is_quadratic()) {
    j["potential"] = {{"kind", "quadratic"}, {"a", spec.V.a()}, {"b", spec.V.b()}};
  } else {
    j["potential"] = {{"kind", "tabulated"},
                      {"grid", std::vector<double>(spec.V.grid().data(), spec.V.grid().data() + spec.V.grid().size())},
                      {"values",
                       std::vector<double>(spec.V.values().data(), spec.V.values().data() + spec.V.values().size())}};
  }
  j["eps_star"] = spec.eps_star;
  j["convention"] = spec.convention == PotentialConvention::Window ? "window" : "reference";
  return j.dump(2);
}

}  // namespace dbm
