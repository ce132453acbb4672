#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace anytime {

// Deterministic random source. All variates are derived from raw mt19937_64
// output with fixed arithmetic, so identically seeded streams produce
// identical draws on every platform/standard library (std::*_distribution
// would not guarantee that, and campaign outputs must be reproducible
// byte-for-byte).
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Low `count` bits uniform, count in [0, 64].
  uint64_t bits(unsigned count) {
    if (count == 0) return 0;
    return eng_() >> (64u - count);
  }

  // Uniform integer in {0, ..., bound-1}; unbiased via rejection.
  uint64_t below(uint64_t bound) {
    if (bound == 0) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % bound;
  }

  // Standard normal via Box–Muller (cosine branch only; no cached second
  // variate, so the draw sequence is a pure function of the call sequence).
  double gauss() {
    double u1;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

 private:
  std::mt19937_64 eng_;
};

// Derives an independent stream seed from a master seed and a textual label.
// Same (master, label) always yields the same seed; distinct labels decorrelate
// via FNV-1a hashing followed by a splitmix64 finalizer.
inline uint64_t seed_split(uint64_t master, std::string_view label) {
  uint64_t h = 14695981039346656037ull;  // FNV-1a offset basis
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ull;  // FNV prime
  }
  uint64_t z = master ^ (h + 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace anytime
