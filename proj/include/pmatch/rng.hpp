#pragma once

// Deterministic random number utilities.
//
// std::mt19937_64 produces a bit-exact stream for a given seed on every
// conforming implementation, but the standard <random> distributions do not.
// All variate generation here is built directly on the raw 64-bit stream so
// results are reproducible across compilers and standard libraries.

#include <cmath>
#include <cstdint>
#include <random>

namespace pmatch {

// splitmix64 step; used both as a seed mixer and to derive substream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Order-independent derivation of substream seeds: hash(master, k1, k2, ...).
inline std::uint64_t derive_seed(std::uint64_t master) { return mix64(master); }

template <typename... Rest>
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t k, Rest... rest) {
  return derive_seed(mix64(master ^ mix64(k + 0x632be59bd9b4e019ULL)), rest...);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1): 53 high bits, exactly representable.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1]: avoids exact zero where a positive draw is required.
  double uniform_pos() { return 1.0 - uniform01(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via the polar method on raw uniforms. One spare kept.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  // Index in [0, n) without modulo bias (rejection on the top band).
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t bound = ~0ULL - ~0ULL % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= bound);
    return static_cast<std::size_t>(x % n);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace pmatch
