#include "dbmlab/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "json.hpp"

namespace dbm {

const std::array<double, 4>& gl4_nodes() {
  static const std::array<double, 4> n = {
      0.5 - 0.5 * 0.8611363115940526, 0.5 - 0.5 * 0.3399810435848563,
      0.5 + 0.5 * 0.3399810435848563, 0.5 + 0.5 * 0.8611363115940526};
  return n;
}

const std::array<double, 4>& gl4_weights() {
  static const std::array<double, 4> w = {0.5 * 0.3478548451374538, 0.5 * 0.6521451548625461,
                                          0.5 * 0.6521451548625461, 0.5 * 0.3478548451374538};
  return w;
}

namespace {

using Cell = GridQuadrature::Cell;

template <class T>
T poly(const Eigen::Vector4d& c, T u) {
  return ((T(c[3]) * u + T(c[2])) * u + T(c[1])) * u + T(c[0]);
}

template <class T>
T dpoly(const Eigen::Vector4d& c, T u) {
  return (T(3.0 * c[3]) * u + T(2.0 * c[2])) * u + T(c[1]);
}

// Power-basis coefficients of the cubic through (u_j, f_j), u_j = offset + j.
Eigen::Vector4d cubic_through(double offset, const Eigen::Vector4d& f) {
  Eigen::Matrix4d V;
  for (int j = 0; j < 4; ++j) {
    const double u = offset + j;
    V(j, 0) = 1.0;
    V(j, 1) = u;
    V(j, 2) = u * u;
    V(j, 3) = u * u * u;
  }
  return V.fullPivLu().solve(f);
}

Cell linear_cell(double y0, double y1, double r0, double r1) {
  Cell c;
  c.y << y0, y1 - y0, 0.0, 0.0;
  c.rho << r0, r1 - r0, 0.0, 0.0;
  return c;
}

bool cubic_ok(const Vec& x, const Vec& v, Eigen::Index k, Eigen::Index i0) {
  if (v[k] == 0.0 && v[k + 1] == 0.0) return false;
  for (Eigen::Index j = i0; j < i0 + 4; ++j)
    if (v[j] < 0.0) return false;
  for (Eigen::Index j = i0; j < i0 + 2; ++j) {
    const double r = (x[j + 2] - x[j + 1]) / (x[j + 1] - x[j]);
    if (r > 5.0 || r < 0.2) return false;
  }
  return true;
}

std::shared_ptr<GridQuadrature> build_quadrature(const Vec& x, const Vec& v) {
  auto q = std::make_shared<GridQuadrature>();
  const Eigen::Index n = x.size() - 1;
  q->cells.resize(static_cast<std::size_t>(n));
  q->nodes.resize(4 * n);
  q->wts.resize(4 * n);
  q->cum.resize(n + 1);
  q->cum[0] = 0.0;
  const auto& gu = gl4_nodes();
  const auto& gw = gl4_weights();
  for (Eigen::Index k = 0; k < n; ++k) {
    Cell c = linear_cell(x[k], x[k + 1], v[k], v[k + 1]);
    if (x.size() >= 4) {
      const Eigen::Index i0 = std::clamp<Eigen::Index>(k - 1, 0, x.size() - 4);
      if (cubic_ok(x, v, k, i0)) {
        Cell cc;
        cc.y = cubic_through(double(i0 - k), x.segment<4>(i0));
        cc.rho = cubic_through(double(i0 - k), v.segment<4>(i0));
        bool good = true;
        for (double u : {0.25, 0.5, 0.75})
          if (dpoly(cc.y, u) <= 0.0) good = false;
        const double slack = -1e-3 * (x[k + 1] - x[k]);
        if (dpoly(cc.y, 0.0) < slack || dpoly(cc.y, 1.0) < slack) good = false;
        for (double u : gu)
          if (poly(cc.rho, u) < 0.0) good = false;
        if (good) c = cc;
      }
    }
    double mass = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double w = gw[j] * poly(c.rho, gu[j]) * dpoly(c.y, gu[j]);
      q->nodes[4 * k + j] = poly(c.y, gu[j]);
      q->wts[4 * k + j] = w;
      mass += w;
    }
    c.mass = mass;
    q->cum[k + 1] = q->cum[k] + mass;
    q->cells[static_cast<std::size_t>(k)] = c;
  }
  std::size_t lo = 0, hi = 0;
  bool any = false;
  for (std::size_t k = 0; k < q->cells.size(); ++k) {
    if (q->cells[k].mass > 0.0) {
      if (!any) lo = k;
      hi = k;
      any = true;
    }
  }
  q->first_massive = lo;
  q->last_massive = hi;
  return q;
}

void scale_quadrature(GridQuadrature& q, double s) {
  for (auto& c : q.cells) {
    c.rho *= s;
    c.mass *= s;
  }
  q.wts *= s;
  q.cum *= s;
}

// Local parameter u with y(u) = x inside a cell (real, monotone branch).
double invert_cell(const Cell& c, double x) {
  double lo = 0.0, hi = 1.0;
  double u = std::clamp((x - c.y[0]) / (poly(c.y, 1.0) - c.y[0]), 0.0, 1.0);
  for (int it = 0; it < 100; ++it) {
    const double f = poly(c.y, u) - x;
    if (f > 0) hi = u; else lo = u;
    const double d = dpoly(c.y, u);
    double un = u - f / d;
    if (!(un > lo && un < hi)) un = 0.5 * (lo + hi);
    if (std::abs(un - u) < 1e-16) return un;
    u = un;
  }
  return u;
}

double partial_mass(const Cell& c, double u) {
  const auto& gu = gl4_nodes();
  const auto& gw = gl4_weights();
  double s = 0.0;
  for (int j = 0; j < 4; ++j) {
    const double t = u * gu[j];
    s += gw[j] * poly(c.rho, t) * dpoly(c.y, t);
  }
  return s * u;
}

// Complex root u* of y(u) = z near the cell.
Complex cell_root(const Cell& c, Complex z) {
  const double y0 = c.y[0], y1 = poly(c.y, 1.0);
  Complex u = (z - y0) / (y1 - y0);
  if (c.y[2] == 0.0 && c.y[3] == 0.0) return u;
  for (int it = 0; it < 60; ++it) {
    const Complex f = poly<Complex>(c.y, u) - z;
    const Complex step = f / dpoly<Complex>(c.y, u);
    u -= step;
    if (std::abs(step) < 1e-15) break;
  }
  return u;
}

// Exact integral over one cell of rho(u) y'(u) / (y(u) - z) du, with the pole
// removed analytically. principal_value requests the real p.v. for real z.
Complex cell_integral(const Cell& c, Complex z, bool principal_value) {
  const auto& gu = gl4_nodes();
  const auto& gw = gl4_weights();
  Complex us = cell_root(c, z);
  if (principal_value) us = Complex(us.real(), 0.0);
  const Complex rs = poly<Complex>(c.rho, us);
  Complex sum = 0.0;
  for (int j = 0; j < 4; ++j) {
    const double u = gu[j];
    Complex du = u - us;
    if (std::abs(du) < 1e-13) du = 1e-13;
    const Complex h = poly(c.rho, u) * dpoly(c.y, u) * du / (Complex(poly(c.y, u)) - z);
    sum += gw[j] * (h - rs) / du;
  }
  Complex lg;
  if (principal_value) {
    lg = std::log(std::abs(1.0 - us.real())) - std::log(std::abs(us.real()));
  } else {
    lg = std::log(1.0 - us) - std::log(-us);
  }
  return sum + rs * lg;
}

Complex cell_plain(const GridQuadrature& q, std::size_t k, Complex z, int power) {
  Complex s = 0.0;
  for (int j = 0; j < 4; ++j) {
    const Complex d = q.nodes[4 * k + j] - z;
    s += q.wts[4 * k + j] / (power == 1 ? d : d * d);
  }
  return s;
}

constexpr double kNearFactor = 4.0;

template <class F>
void for_near_cells(const Vec& x, Complex z, F&& f) {
  const Eigen::Index n = x.size() - 1;
  const double* b = x.data();
  Eigen::Index k0 = std::upper_bound(b, b + x.size(), z.real()) - b - 1;
  k0 = std::clamp<Eigen::Index>(k0, 0, n - 1);
  auto near = [&](Eigen::Index k) {
    const double h = x[k + 1] - x[k];
    return std::abs(z - 0.5 * (x[k] + x[k + 1])) <= kNearFactor * h;
  };
  for (Eigen::Index k = k0; k >= 0; --k) {
    if (!near(k) && k < k0 - 1) break;
    if (near(k)) f(static_cast<std::size_t>(k));
  }
  for (Eigen::Index k = k0 + 1; k < n; ++k) {
    if (!near(k) && k > k0 + 1) break;
    if (near(k)) f(static_cast<std::size_t>(k));
  }
}

void check_finite(const Vec& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) throw ValidationError(what, "non-finite entry at " + std::to_string(i));
}

}  // namespace

Measure1D Measure1D::atomic(Vec atoms, Vec weights) {
  if (atoms.size() == 0 || atoms.size() != weights.size())
    throw ValidationError("atoms", "atoms and weights must be nonempty and of equal length");
  check_finite(atoms, "atoms");
  check_finite(weights, "weights");
  for (Eigen::Index i = 1; i < atoms.size(); ++i)
    if (!(atoms[i] > atoms[i - 1])) throw ValidationError("atoms", "atoms must be strictly increasing");
  if ((weights.array() < 0.0).any()) throw ValidationError("weights", "negative weight");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw ValidationError("weights", "weights must sum to 1 (got " + std::to_string(weights.sum()) + ")");
  Measure1D m;
  m.variant_ = Variant::Atomic;
  m.points_ = std::move(atoms);
  m.values_ = std::move(weights);
  return m;
}

Measure1D Measure1D::gridded(Vec grid, Vec values) {
  if (grid.size() < 2 || grid.size() != values.size())
    throw ValidationError("grid", "grid needs at least two points and one value per point");
  check_finite(grid, "grid");
  check_finite(values, "values");
  for (Eigen::Index i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ValidationError("grid", "grid must be strictly increasing");
  if ((values.array() < 0.0).any()) throw ValidationError("values", "negative density value");
  auto q = build_quadrature(grid, values);
  const double mass = q->cum[q->cum.size() - 1];
  if (!(mass > 0.0)) throw ValidationError("values", "density has zero mass");
  scale_quadrature(*q, 1.0 / mass);
  Measure1D m;
  m.variant_ = Variant::Gridded;
  m.points_ = std::move(grid);
  m.values_ = values / mass;
  m.raw_mass_ = mass;
  m.quad_ = std::move(q);
  return m;
}

Measure1D Measure1D::with_eta_used(double eta) const {
  Measure1D m = *this;
  m.eta_used_ = eta;
  return m;
}

double Measure1D::support_lo() const {
  if (is_atomic()) return points_[0];
  return points_[static_cast<Eigen::Index>(quad_->first_massive)];
}

double Measure1D::support_hi() const {
  if (is_atomic()) return points_[points_.size() - 1];
  return points_[static_cast<Eigen::Index>(quad_->last_massive) + 1];
}

double Measure1D::cdf(double x) const {
  if (is_atomic()) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < points_.size() && points_[i] <= x; ++i) s += values_[i];
    return std::min(s, 1.0);
  }
  const Eigen::Index n = points_.size() - 1;
  if (x <= points_[0]) return 0.0;
  if (x >= points_[n]) return 1.0;
  const double* b = points_.data();
  const Eigen::Index k = std::upper_bound(b, b + n + 1, x) - b - 1;
  const Cell& c = quad_->cells[static_cast<std::size_t>(k)];
  return quad_->cum[k] + partial_mass(c, invert_cell(c, x));
}

double Measure1D::density(double x) const {
  if (is_atomic()) throw DomainError("density of an atomic measure is not a function");
  const Eigen::Index n = points_.size() - 1;
  if (x < points_[0] || x > points_[n]) return 0.0;
  const double* b = points_.data();
  const Eigen::Index k = std::min<Eigen::Index>(std::upper_bound(b, b + n + 1, x) - b - 1, n - 1);
  const Cell& c = quad_->cells[static_cast<std::size_t>(k)];
  return std::max(0.0, poly(c.rho, invert_cell(c, x)));
}

double Measure1D::moment(int k) const {
  if (is_atomic()) return (values_.array() * points_.array().pow(k)).sum();
  return (quad_->wts.array() * quad_->nodes.array().pow(k)).sum();
}

double Measure1D::variance() const {
  const double m1 = moment(1);
  return moment(2) - m1 * m1;
}

double Measure1D::integrate(const std::function<double(double)>& f, double a, double b) const {
  if (!(b > a)) return 0.0;
  if (is_atomic()) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < points_.size(); ++i)
      if (points_[i] >= a && points_[i] <= b) s += values_[i] * f(points_[i]);
    return s;
  }
  const auto& gu = gl4_nodes();
  const auto& gw = gl4_weights();
  double s = 0.0;
  const Eigen::Index n = points_.size() - 1;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double xl = points_[k], xr = points_[k + 1];
    if (xr <= a || xl >= b) continue;
    const Cell& c = quad_->cells[static_cast<std::size_t>(k)];
    if (xl >= a && xr <= b) {
      for (int j = 0; j < 4; ++j) s += quad_->wts[4 * k + j] * f(quad_->nodes[4 * k + j]);
      continue;
    }
    const double ul = xl < a ? invert_cell(c, a) : 0.0;
    const double ur = xr > b ? invert_cell(c, b) : 1.0;
    for (int j = 0; j < 4; ++j) {
      const double u = ul + (ur - ul) * gu[j];
      s += (ur - ul) * gw[j] * poly(c.rho, u) * dpoly(c.y, u) * f(poly(c.y, u));
    }
  }
  return s;
}

Complex Measure1D::stieltjes(Complex z, bool principal_value) const {
  if (is_atomic()) {
    Complex s = 0.0;
    for (Eigen::Index i = 0; i < points_.size(); ++i) {
      const Complex d = points_[i] - z;
      if (d == Complex(0.0)) throw SingularEvaluation("evaluation point coincides with an atom");
      s += values_[i] / d;
    }
    return s;
  }
  if (z.imag() == 0.0 && !principal_value) {
    if (z.real() > support_lo() && z.real() < support_hi())
      throw SingularEvaluation("real evaluation point inside the support of a gridded density");
  }
  if (principal_value && z.imag() == 0.0) {
    // Nodes make the p.v. logs singular individually; average a symmetric pair.
    const double E = z.real();
    const double* b = points_.data();
    const Eigen::Index n = points_.size();
    const Eigen::Index j = std::lower_bound(b, b + n, E) - b;
    for (Eigen::Index i : {j - 1, j}) {
      if (i < 0 || i >= n) continue;
      const double h = std::min(i > 0 ? points_[i] - points_[i - 1] : 1.0,
                                i + 1 < n ? points_[i + 1] - points_[i] : 1.0);
      if (std::abs(E - points_[i]) < 1e-9 * h) {
        const double d = 1e-6 * h;
        return 0.5 * (stieltjes(Complex(points_[i] - d, 0.0), true) +
                      stieltjes(Complex(points_[i] + d, 0.0), true));
      }
    }
  }
  const GridQuadrature& q = *quad_;
  Complex s = 0.0;
  const Eigen::Index m = q.nodes.size();
  for (Eigen::Index i = 0; i < m; ++i) s += q.wts[i] / (q.nodes[i] - z);
  for_near_cells(points_, z, [&](std::size_t k) {
    const Cell& c = q.cells[k];
    if (c.mass == 0.0 && c.rho.isZero()) return;
    s += cell_integral(c, z, principal_value) - cell_plain(q, k, z, 1);
  });
  return s;
}

Complex Measure1D::stieltjes_derivative(Complex z) const {
  if (is_atomic()) {
    Complex s = 0.0;
    for (Eigen::Index i = 0; i < points_.size(); ++i) {
      const Complex d = points_[i] - z;
      s += values_[i] / (d * d);
    }
    return s;
  }
  const GridQuadrature& q = *quad_;
  Complex s = 0.0;
  const Eigen::Index m = q.nodes.size();
  for (Eigen::Index i = 0; i < m; ++i) {
    const Complex d = q.nodes[i] - z;
    s += q.wts[i] / (d * d);
  }
  for_near_cells(points_, z, [&](std::size_t k) {
    const Cell& c = q.cells[k];
    if (c.mass == 0.0 && c.rho.isZero()) return;
    const double h = 1e-4 * (points_[static_cast<Eigen::Index>(k) + 1] -
                             points_[static_cast<Eigen::Index>(k)]);
    const Complex d = (cell_integral(c, z + h, false) - cell_integral(c, z - h, false)) / (2.0 * h);
    s += d - cell_plain(q, k, z, 2);
  });
  return s;
}

Measure1D Measure1D::affine(double scale, double shift) const {
  if (!(scale > 0.0)) throw ValidationError("scale", "affine map needs a positive scale");
  if (is_atomic()) return atomic((scale * points_.array() + shift).matrix(), values_);
  Measure1D m = gridded((scale * points_.array() + shift).matrix(), values_ / scale);
  if (eta_used_) m.eta_used_ = *eta_used_ * scale;
  return m;
}

// ---- operations ----------------------------------------------------------

Complex stieltjes_transform(const Measure1D& mu, ComplexPoint z) {
  if (z.im < 0.0) throw DomainError("stieltjes_transform needs Im z >= 0");
  return mu.stieltjes(z.value(), false);
}

Measure1D poisson_smooth(const Measure1D& mu, double eta, const Vec& grid, const PoissonOptions& opt) {
  if (!(eta > 0.0)) throw ValidationError("eta", "smoothing scale must be positive");
  if (grid.size() < 2) throw ValidationError("grid", "grid needs at least two points");
  const double a = grid[0], b = grid[grid.size() - 1];
  auto inside = [&](double v) { return (std::atan((b - v) / eta) - std::atan((a - v) / eta)) / std::numbers::pi; };
  double kept = 0.0;
  if (mu.is_atomic()) {
    for (Eigen::Index i = 0; i < mu.points().size(); ++i) kept += mu.weights_or_values()[i] * inside(mu.points()[i]);
  } else {
    const auto& q = mu.quadrature();
    for (Eigen::Index i = 0; i < q.nodes.size(); ++i) kept += q.wts[i] * inside(q.nodes[i]);
  }
  const double deficit = 1.0 - kept;
  if (deficit > opt.max_truncated_mass) throw MassLossError("grid too narrow for Poisson smoothing", deficit);
  Vec vals(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i)
    vals[i] = std::max(0.0, mu.stieltjes(Complex(grid[i], eta)).imag() / std::numbers::pi);
  return Measure1D::gridded(grid, vals).with_eta_used(eta);
}

double hilbert_transform(const Measure1D& mu, double E) {
  if (!mu.is_atomic()) {
    if (E < mu.points()[0] || E > mu.points()[mu.points().size() - 1])
      throw DomainError("hilbert_transform: E outside the grid");
  }
  return mu.stieltjes(Complex(E, 0.0), true).real();
}

Quantile quantiles(const Measure1D& mu, int N, int k) {
  if (N <= 0 || k < 1 || k > N) throw DomainError("quantiles: need 1 <= k <= N");
  const double level = static_cast<double>(k) / N;
  constexpr double tol = 1e-12;
  if (mu.is_atomic()) {
    double s = 0.0;
    const Vec& a = mu.points();
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      s += mu.weights_or_values()[i];
      if (s >= level - tol) return {a[i], false};
    }
    return {a[a.size() - 1], false};
  }
  const auto& q = mu.quadrature();
  const Vec& x = mu.points();
  const Eigen::Index n = x.size() - 1;
  Eigen::Index kc = 0;
  while (kc < n - 1 && q.cum[kc + 1] < level - tol) ++kc;
  const auto& c = q.cells[static_cast<std::size_t>(kc)];
  const double target = level - q.cum[kc];
  Quantile out;
  if (std::abs(q.cum[kc + 1] - level) <= tol) {
    // Level reached at the end of this cell: check for a plateau to the right.
    std::size_t next = static_cast<std::size_t>(kc) + 1;
    if (next < q.cells.size() && q.cells[next].mass <= 1e-15 && kc + 1 < n) {
      out.value = x[kc + 1];
      out.gap_quantile = true;
      return out;
    }
  }
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (partial_mass(c, mid) >= target) hi = mid; else lo = mid;
  }
  out.value = poly(c.y, hi);
  return out;
}

Vec quantile_vector(const Measure1D& mu, int N) {
  Vec g(N);
  for (int k = 1; k <= N; ++k) g[k - 1] = quantiles(mu, N, k).value;
  return g;
}

Measure1D stieltjes_invert(const Vec& grid, const Eigen::VectorXcd& m_values, double eta_used) {
  if (grid.size() != m_values.size()) throw ValidationError("m_values", "one transform value per grid point");
  Vec d(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const double im = m_values[i].imag();
    if (im < -1e-12) throw ValidationError("m_values", "invalid transform: negative imaginary part at " + std::to_string(i));
    d[i] = std::max(0.0, im) / std::numbers::pi;
  }
  return Measure1D::gridded(grid, d).with_eta_used(eta_used);
}

// ---- persistence ---------------------------------------------------------

std::string measure_to_json(const Measure1D& mu) {
  nlohmann::json j;
  j["variant"] = mu.is_atomic() ? "atomic" : "gridded";
  j["points"] = std::vector<double>(mu.points().begin(), mu.points().end());
  j["weights_or_values"] = std::vector<double>(mu.weights_or_values().begin(), mu.weights_or_values().end());
  if (mu.eta_used()) j["eta_used"] = *mu.eta_used();
  return j.dump();
}

Measure1D measure_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  for (const auto& [key, _] : j.items())
    if (key != "variant" && key != "points" && key != "weights_or_values" && key != "eta_used")
      throw ValidationError(key, "unknown key in measure");
  const auto pts = j.at("points").get<std::vector<double>>();
  const auto vals = j.at("weights_or_values").get<std::vector<double>>();
  Vec p = Eigen::Map<const Vec>(pts.data(), static_cast<Eigen::Index>(pts.size()));
  Vec v = Eigen::Map<const Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  const std::string variant = j.at("variant").get<std::string>();
  Measure1D m = variant == "atomic" ? Measure1D::atomic(p, v)
                : variant == "gridded" ? Measure1D::gridded(p, v)
                                       : throw ValidationError("variant", "expected atomic or gridded");
  if (j.contains("eta_used")) m = m.with_eta_used(j["eta_used"].get<double>());
  return m;
}

void write_density_csv(std::ostream& os, const Measure1D& mu) {
  if (mu.is_atomic()) throw DomainError("density CSV needs a gridded measure");
  os << "x,rho\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < mu.points().size(); ++i)
    os << mu.points()[i] << ',' << mu.weights_or_values()[i] << '\n';
}

}  // namespace dbm
