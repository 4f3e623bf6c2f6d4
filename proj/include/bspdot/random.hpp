#pragma once

// Seeded, splittable 64-bit PRNG used for every synthetic data path.

#include "bspdot/block.hpp"

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace bspdot {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }
  /// Independent child stream; deterministic in (seed, stream).
  Rng split(std::uint64_t stream) const { return Rng(mix(seed_ ^ mix(stream + 0x9e37))); }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::uint64_t next() { return engine_(); }
  int index(int n) { return std::uniform_int_distribution<int>(0, n - 1)(engine_); }

  Matrix gaussian(int rows, int cols);
  Matrix symmetric(int d);
  /// A A^T / d + shift * I with Gaussian A.
  Matrix spd(int d, double shift = 0.1);
  /// Strictly positive weights summing to one.
  std::vector<double> simplex(int n, double floor = 0.05);
  /// Random SPD blocks normalized so they sum to the identity.
  BlockMarginal spd_marginal(int n, int d);
  /// Random diagonal SPD blocks summing to the identity.
  BlockMarginal diagonal_marginal(int n, int d);
  /// Row and column block sums of a random SPD block grid normalized to total
  /// mass I, so the coupling set between them is known to be non-empty.
  std::pair<BlockMarginal, BlockMarginal> coupled_marginals(int m, int n, int d);

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace bspdot
