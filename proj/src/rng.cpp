#include "dbmlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace dbm {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

// 53-bit uniform strictly inside (0,1).
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t replica, std::uint64_t stream)
    : seed_(seed), replica_(replica), stream_(stream) {
  const std::uint64_t k = splitmix64(seed ^ splitmix64(replica ^ splitmix64(stream + 0x51ED)));
  k0_ = static_cast<std::uint32_t>(k);
  k1_ = static_cast<std::uint32_t>(k >> 32);
}

std::array<std::uint32_t, 4> CounterRng::block(std::uint64_t a, std::uint64_t b) const {
  std::uint32_t c0 = static_cast<std::uint32_t>(a), c1 = static_cast<std::uint32_t>(a >> 32);
  std::uint32_t c2 = static_cast<std::uint32_t>(b), c3 = static_cast<std::uint32_t>(b >> 32);
  std::uint32_t k0 = k0_, k1 = k1_;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c0, hi0, lo0);
    mulhilo(kMul1, c2, hi1, lo1);
    const std::uint32_t n0 = hi1 ^ c1 ^ k0;
    const std::uint32_t n2 = hi0 ^ c3 ^ k1;
    c0 = n0;
    c1 = lo1;
    c2 = n2;
    c3 = lo0;
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return {c0, c1, c2, c3};
}

double CounterRng::uniform(std::uint64_t a, std::uint64_t b) const {
  const auto r = block(a, b);
  return to_unit(r[0], r[1]);
}

std::pair<double, double> CounterRng::normal_pair(std::uint64_t a, std::uint64_t b) const {
  const auto r = block(a, b);
  const double u1 = to_unit(r[0], r[1]);
  const double u2 = to_unit(r[2], r[3]);
  const double rad = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * std::numbers::pi * u2;
  return {rad * std::cos(ang), rad * std::sin(ang)};
}

double CounterRng::normal(std::uint64_t a, std::uint64_t b) const { return normal_pair(a, b).first; }

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const auto [z0, z1] = rng_.normal_pair(counter_++, 1);
  spare_ = z1;
  has_spare_ = true;
  return z0;
}

}  // namespace dbm
