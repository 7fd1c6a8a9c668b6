#pragma once

#include <cmath>
#include <complex>
#include <numbers>

#include "dbmlab/measures.hpp"

namespace dbm {

// Semicircle law of variance s2 (support [-2 sqrt(s2), 2 sqrt(s2)]).
template <class T>
T semicircle_density(T x, T s2 = T(1)) {
  const T r2 = T(4) * s2 - x * x;
  return r2 > T(0) ? std::sqrt(r2) / (T(2) * std::numbers::pi_v<T> * s2) : T(0);
}

// Stieltjes transform, branch with Im m > 0 on the upper half plane.
template <class T>
std::complex<T> semicircle_stieltjes(std::complex<T> z, T s2 = T(1)) {
  const T r = T(2) * std::sqrt(s2);
  const std::complex<T> root = std::sqrt(z - r) * std::sqrt(z + r);
  return (-z + root) / (T(2) * s2);
}

template <class T>
T semicircle_cdf(T x) {
  if (x <= T(-2)) return T(0);
  if (x >= T(2)) return T(1);
  return T(0.5) + x * std::sqrt(T(4) - x * x) / (T(4) * std::numbers::pi_v<T>) +
         std::asin(x / T(2)) / std::numbers::pi_v<T>;
}

// Inverse of semicircle_cdf (unit variance).
double semicircle_quantile(double level);
// gamma_k = smallest x with F(x) >= k/N for the unit semicircle.
Vec semicircle_quantiles(int N);

// Unit-variance semicircle as a gridded measure on Chebyshev nodes over [-2, 2],
// mapped affinely to centre c and variance s2.
Measure1D semicircle_measure(int cells = 2000, double center = 0.0, double s2 = 1.0);

}  // namespace dbm
