#pragma once
// Internal: Euler-Maruyama driver with Brownian-bridge halving shared by the
// DBM variants and the local Gibbs sampler.

#include <cmath>
#include <string>

#include "dbmlab/dbm.hpp"

namespace dbm::detail {

struct Violation {
  enum class Kind { None, Collision, Containment } kind = Kind::None;
  int a = -1, b = -1;
};

// Common Euler-Maruyama driver with Brownian-bridge halving. Model supplies
// drift(t, x, out), check(x, t) and contain(x_prev, x, t).
template <class Model>
class Integrator {
 public:
  Integrator(Model& model, double sigma, std::uint64_t seed, const SdeOptions& opt, Eigen::VectorXi noise_labels,
             std::uint64_t stream = streams::dbm_noise)
      : model_(model), sigma_(sigma), noise_(seed, opt.replica, stream),
        bridge_(seed, opt.replica, streams::bridge), opt_(opt), labels_(std::move(noise_labels)) {
    for (Eigen::Index i = 0; i < labels_.size(); ++i)
      if (labels_[i] < 0 || labels_[i] >= (1 << 20)) throw ValidationError("labels", "must lie in [0, 2^20)");
  }

  Trajectory run(Vec x, double t0, double t1, double dt, double beta, const Eigen::VectorXi& out_labels,
                 Eigen::Index out_rows) {
    if (!(dt > 0.0)) throw ValidationError("dt", "must be positive");
    if (!(t1 > t0)) throw ValidationError("t_span", "t1 must exceed t0");
    if (opt_.stride < 1) throw ValidationError("stride", "must be >= 1");
    const long long n = std::max<long long>(1, std::llround((t1 - t0) / dt));
    const double h = (t1 - t0) / static_cast<double>(n);
    const long long step0 = std::llround(t0 / dt);
    Trajectory tr;
    tr.labels = out_labels;
    tr.beta = beta;
    tr.dt = h;
    tr.stride = opt_.stride;
    tr.seed = noise_.seed();
    tr.replica = opt_.replica;
    const long long frames = n / opt_.stride + 1 + (n % opt_.stride ? 1 : 0);
    tr.times.resize(frames);
    tr.frames.resize(out_rows, frames);
    Eigen::Index f = 0;
    tr.times[f] = t0;
    tr.frames.col(f++) = x.head(out_rows);
    Vec dW(x.size());
    const double sq = std::sqrt(h);
    for (long long s = 0; s < n; ++s) {
      const double t = t0 + h * static_cast<double>(s);
      const std::uint64_t key = static_cast<std::uint64_t>(step0 + s);
      for (Eigen::Index i = 0; i < x.size(); ++i)
        dW[i] = opt_.zero_noise ? 0.0 : sq * noise_.normal(key, static_cast<std::uint64_t>(labels_[i]));
      advance(x, t, h, dW, 0, 1, key);
      if ((s + 1) % opt_.stride == 0 || s + 1 == n) {
        tr.times[f] = t0 + h * static_cast<double>(s + 1);
        tr.frames.col(f++) = x.head(out_rows);
      }
    }
    tr.halvings = halvings_;
    tr.containment_events = containment_;
    tr.flagged = containment_ > 0;
    return tr;
  }

  long containment_events() const { return containment_; }

  // Single step, exposed for step_dbm and samplers that manage their own clock.
  void step(Vec& x, double t, double h, const Vec& dW, std::uint64_t key) { advance(x, t, h, dW, 0, 1, key); }
  long halvings() const { return halvings_; }

 private:
  void advance(Vec& x, double t, double h, const Vec& dW, int depth, std::uint64_t node, std::uint64_t key) {
    model_.drift(t, x, drift_);
    Vec trial = x + h * drift_ + sigma_ * dW;
    const Violation v = model_.check(trial, t + h);
    if (v.kind == Violation::Kind::None) {
      x = std::move(trial);
      return;
    }
    if (depth >= opt_.max_halvings) {
      if (v.kind == Violation::Kind::Collision) throw CollisionError(v.a, v.b, t + h);
      if (opt_.strict_containment)
        throw ContainmentError("window particle " + std::to_string(v.a) + " left the configuration interval at t=" +
                               std::to_string(t + h));
      model_.contain(x, trial, t + h);
      ++containment_;
      if (model_.check(trial, t + h).kind == Violation::Kind::Collision) throw CollisionError(v.a, v.b, t + h);
      x = std::move(trial);
      return;
    }
    ++halvings_;
    // Bridge: W(h/2) | W(h) = dW is N(dW/2, h/4); the draw depends only on the tree node.
    Vec first(dW.size());
    const double sd = 0.5 * std::sqrt(h);
    for (Eigen::Index i = 0; i < dW.size(); ++i) {
      const double xi =
          opt_.zero_noise ? 0.0 : bridge_.normal(key, (node << 20) | static_cast<std::uint64_t>(labels_[i]));
      first[i] = 0.5 * dW[i] + sd * xi;
    }
    const Vec second = dW - first;
    advance(x, t, 0.5 * h, first, depth + 1, 2 * node, key);
    advance(x, t + 0.5 * h, 0.5 * h, second, depth + 1, 2 * node + 1, key);
  }

  Model& model_;
  double sigma_;
  CounterRng noise_, bridge_;
  const SdeOptions& opt_;
  Eigen::VectorXi labels_;
  Vec drift_;
  long halvings_ = 0, containment_ = 0;
};

inline Violation first_disorder(const double* x, Eigen::Index n, const int* labels) {
  for (Eigen::Index i = 1; i < n; ++i)
    if (!(x[i] > x[i - 1])) return {Violation::Kind::Collision, labels[i - 1], labels[i]};
  return {};
}

// Adds -(1/N) sum_{j != i} 1/(x_j - x_i) to out.
inline void add_pair_repulsion(const double* x, Eigen::Index n, double invN, double* out) {
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = x[i];
    double acc = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = invN / (x[j] - xi);
      acc -= d;
      out[j] += d;
    }
    out[i] += acc;
  }
}


}  // namespace dbm::detail
