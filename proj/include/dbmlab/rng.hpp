#pragma once

#include <array>
#include <cstdint>
#include <utility>

namespace dbm {

// Counter-based generator (Philox 4x32, 10 rounds). A draw is a pure function of
// (master seed, replica id, stream id, counter), so replicas and particles can be
// generated in any order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t replica, std::uint64_t stream);

  std::array<std::uint32_t, 4> block(std::uint64_t a, std::uint64_t b) const;
  // Uniform on the open interval (0,1).
  double uniform(std::uint64_t a, std::uint64_t b) const;
  double normal(std::uint64_t a, std::uint64_t b) const;
  std::pair<double, double> normal_pair(std::uint64_t a, std::uint64_t b) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t replica() const { return replica_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_, replica_, stream_;
  std::uint32_t k0_, k1_;
};

// Sequential view over a CounterRng for code that just needs "the next number".
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t replica, std::uint64_t stream)
      : rng_(seed, replica, stream) {}
  double uniform() { return rng_.uniform(counter_++, 0); }
  double normal();

 private:
  CounterRng rng_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Stream ids used across the library; keeps independent consumers apart.
namespace streams {
inline constexpr std::uint64_t dbm_noise = 1;
inline constexpr std::uint64_t bridge = 2;
inline constexpr std::uint64_t matrix_entries = 3;
inline constexpr std::uint64_t ou_increments = 4;
inline constexpr std::uint64_t ou_reference = 5;
inline constexpr std::uint64_t gibbs = 6;
inline constexpr std::uint64_t metropolis = 7;
inline constexpr std::uint64_t control = 8;
}  // namespace streams

}  // namespace dbm
