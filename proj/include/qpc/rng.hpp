#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace qpc {

// Deterministic PRNG (xoshiro256**). We do not use <random> distributions
// because their output is implementation-defined; cohort reproducibility
// requires the same bytes from the same seed everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    // splitmix64 expansion of the seed into the state.
    uint64_t x = seed;
    for (auto& s : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      s = z ^ (z >> 31);
    }
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

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the partner value is cached so a stream
  // consumes exactly one pair of uniforms per two normals.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4];
  double cached_ = 0.0;
  bool have_cached_ = false;
};

// Derives a named sub-stream seed from a root seed. All randomness flows from
// one root seed through named streams (cohort fields, noise, defects) so any
// stage can be re-run independently yet reproducibly.
inline uint64_t derive_stream(uint64_t root, std::string_view name, uint64_t a = 0,
                              uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = 0xcbf29ce484222325ULL ^ root;
  auto mix = [&h](uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
    h ^= h >> 29;
  };
  for (const char ch : name) mix(static_cast<uint64_t>(static_cast<unsigned char>(ch)));
  mix(a + 1);
  mix(b + 1);
  mix(c + 1);
  h ^= h >> 32;
  return h;
}

}  // namespace qpc
