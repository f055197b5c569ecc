#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cfdens {

// Seeded RNG with explicit bit-level conversions. std::mt19937_64 has a fixed
// output sequence, and we avoid std::*_distribution (implementation-defined),
// so streams are reproducible byte-for-byte across platforms and runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent substream derived from (master, stream) via splitmix64.
  Rng(std::uint64_t master, std::uint64_t stream);

  std::uint64_t next_u64();

  // Uniform on the open interval (0,1).
  double uniform();
  double uniform(double a, double b);

  // Standard normal via Box-Muller (second value cached).
  double normal();

  bool bernoulli(double p);

  // Integer in [0, n); rejection-free modulo path kept simple on purpose.
  std::uint64_t below(std::uint64_t n);

  // Fisher-Yates shuffle of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 gen_;
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace cfdens
