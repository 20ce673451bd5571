// SPDX-License-Identifier: Apache-2.0
//
// Deterministic, platform-independent pseudo-random source used everywhere
// randomness is needed (data pipelines, init, dropout). xoshiro256** seeded
// through splitmix64; all integer/real mappings are written out explicitly so
// streams are reproducible bit-for-bit across compilers and platforms.
#pragma once

#include <cmath>
#include <cstdint>

namespace tunlm {

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Mixes a base seed with stream labels. Used to give each document / example /
// step its own independent stream so sharded output does not depend on
// scheduling order.
inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
  uint64_t s = seed;
  uint64_t h = splitmix64(s);
  s ^= a * 0x9e3779b97f4a7c15ULL;
  h ^= splitmix64(s);
  s ^= b * 0xc2b2ae3d27d4eb4fULL;
  h ^= splitmix64(s);
  return h;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Unbiased integer in [0, bound) via rejection on the top bits.
  uint32_t uniform_u32(uint32_t bound) {
    if (bound <= 1) return 0;
    const uint64_t span = bound;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<uint32_t>(x % span);
  }

  // Uniform double in [0, 1) with 53 bits of randomness.
  double uniform_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller. One draw pair per call; the sine branch is
  // discarded to keep the stream layout simple.
  double normal() {
    double u1 = uniform_double();
    while (u1 <= 0.0) u1 = uniform_double();
    const double u2 = uniform_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t state_[4];
};

}  // namespace tunlm
