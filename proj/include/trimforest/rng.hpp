#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "trimforest/common.hpp"

namespace trimforest {

// SplitMix64 finalizer; spreads raw seeds over the full 64-bit space.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stream k of a master seed. Every bootstrap, tree, replicate, and grid
// point gets its own stream so results do not depend on evaluation order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t k) {
  return mix64(mix64(master) ^ mix64(~k));
}

// Seedable generator with fixed transforms on top of mt19937_64. Results
// are deterministic for a given build; bit identity across standard
// libraries or languages is not promised.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return double(eng_() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error("Rng::below needs n >= 1");
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = eng_();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace trimforest
