#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace geogan {

// Counter-based deterministic RNG. Every draw is a pure function of
// (key, counter), so independent streams can be derived for any purpose
// (init of a named parameter, dropout mask of a given step/layer/sample,
// per-city synthesis) without shared state or draw-order coupling.
// Mixing is the SplitMix64 finalizer over key ^ golden-ratio-stepped counter.
class CounterRng {
 public:
  CounterRng() = default;
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Derive a child stream; order of derivation does not matter.
  CounterRng stream(std::uint64_t salt) const {
    return CounterRng(mix(key_ ^ mix(salt)));
  }
  CounterRng stream(std::string_view label) const {
    return stream(hash(label));
  }

  static std::uint64_t hash(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a, then mixed
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return mix(h);
  }

  std::uint64_t next_u64() { return mix(key_ ^ (counter_++ * 0x9e3779b97f4a7c15ULL)); }

  // Uniform in [0,1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  float next_float() { return static_cast<float>(next_double()); }

  // Uniform integer in [0, n); n > 0.
  std::uint64_t next_below(std::uint64_t n) {
    // Modulo bias is < 2^-53 of a bucket for all n used here.
    return next_u64() % n;
  }

  // Standard normal via Box-Muller (one value per pair of uniforms).
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace geogan
