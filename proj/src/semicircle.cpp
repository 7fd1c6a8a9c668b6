#include "dbmlab/semicircle.hpp"

namespace dbm {

double semicircle_quantile(double level) {
  if (level <= 0.0) return -2.0;
  if (level >= 1.0) return 2.0;
  double lo = -2.0, hi = 2.0;
  double x = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double f = semicircle_cdf(x) - level;
    if (f > 0) hi = x; else lo = x;
    const double d = semicircle_density(x);
    double xn = d > 0 ? x - f / d : 0.5 * (lo + hi);
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (std::abs(xn - x) < 1e-15) return xn;
    x = xn;
  }
  return x;
}

Vec semicircle_quantiles(int N) {
  Vec g(N);
  for (int k = 1; k <= N; ++k) g[k - 1] = semicircle_quantile(static_cast<double>(k) / N);
  return g;
}

Measure1D semicircle_measure(int cells, double center, double s2) {
  Vec x(cells + 1), v(cells + 1);
  for (int i = 0; i <= cells; ++i) {
    const double th = std::numbers::pi * (1.0 - static_cast<double>(i) / cells);
    x[i] = 2.0 * std::cos(th);
    v[i] = std::sin(th) / std::numbers::pi;
  }
  x[0] = -2.0;
  x[cells] = 2.0;
  v[0] = 0.0;
  v[cells] = 0.0;
  Measure1D m = Measure1D::gridded(x, v);
  if (center == 0.0 && s2 == 1.0) return m;
  return m.affine(std::sqrt(s2), center);
}

}  // namespace dbm
