#pragma once

// Reference computations used by the tests. Written against textbook formulas
// only, so they do not share code paths with the library.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

using C = std::complex<double>;
inline constexpr double pi = std::numbers::pi;

// Root of s m^2 + z m + 1 = 0 with Im m > 0 (Stieltjes transform of the
// semicircle of variance s), chosen by comparing both roots.
inline C quadratic_m(C z, double s = 1.0) {
  const C disc = std::sqrt(z * z - 4.0 * s);
  const C r1 = (-z + disc) / (2.0 * s), r2 = (-z - disc) / (2.0 * s);
  return r1.imag() > r2.imag() ? r1 : r2;
}

inline double sc_density(double x, double s = 1.0) {
  const double r2 = 4.0 * s - x * x;
  return r2 > 0 ? std::sqrt(r2) / (2.0 * pi * s) : 0.0;
}

// Composite Simpson rule with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

// CDF by substitution x = 2 sin(theta), which removes the edge singularity.
inline double sc_cdf(double x) {
  if (x <= -2) return 0;
  if (x >= 2) return 1;
  const double th = std::asin(x / 2.0);
  return simpson([](double t) { return 2.0 * std::cos(t) * std::cos(t) / pi; }, -pi / 2, th, 4000);
}

inline double bisect(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
  double flo = f(lo);
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0) == (flo > 0)) lo = mid, flo = fm;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline double sc_quantile(double level) {
  return bisect([&](double x) { return sc_cdf(x) - level; }, -2.0, 2.0);
}

// Hilbert-type real part of m_sc on the real axis: -E/2 inside, root outside.
inline double sc_real_part(double E) {
  if (std::abs(E) <= 2) return -E / 2;
  return (-E + std::copysign(std::sqrt(E * E - 4), E)) / 2;
}

// Free convolution of (1/2)(delta_{-a} + delta_{a}) with a semicircle of
// variance s: m solves m = 1/2 sum_{+-} 1/(+-a - z - s m). Plain damped iteration.
inline C two_atom_flow_m(double a, double s, C z) {
  C m = C(0, 1);
  for (int it = 0; it < 200000; ++it) {
    const C next = 0.5 * (1.0 / (a - z - s * m) + 1.0 / (-a - z - s * m));
    if (std::abs(next - m) < 1e-15) return next;
    m = 0.5 * m + 0.5 * next;
  }
  return m;
}

// Two-particle zero-noise DBM gap: dg/dt = 2/(N g) - g/2, classic RK4.
inline double two_particle_gap(double g0, int N, double t, double h = 1e-4) {
  auto f = [N](double g) { return 2.0 / (N * g) - g / 2.0; };
  double g = g0;
  const long n = std::lround(t / h);
  for (long i = 0; i < n; ++i) {
    const double k1 = f(g), k2 = f(g + h * k1 / 2), k3 = f(g + h * k2 / 2), k4 = f(g + h * k3);
    g += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6;
  }
  return g;
}

}  // namespace oracle
