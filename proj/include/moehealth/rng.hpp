#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "moehealth/types.hpp"

namespace moehealth {

// splitmix64; used to derive independent sub-stream seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream));
}

/// Deterministic random source. The engine is std::mt19937_64 (bit-exact per
/// the standard) and every transform below is hand-specified, so identical
/// seeds give identical draws on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  real_t uniform01() { return static_cast<real_t>(engine_() >> 11) * 0x1.0p-53; }

  real_t uniform(real_t lo, real_t hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (no cached spare, so the stream is stateless).
  real_t normal() {
    real_t u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const real_t u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi_v<real_t> * u2);
  }

  real_t normal(real_t mean, real_t stddev) { return mean + stddev * normal(); }

  bool bernoulli(real_t p) { return uniform01() < p; }

  /// Uniform integer in [0, n). Multiply-shift bound; bias is < 2^-64.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  /// Index drawn from an (unnormalized, non-negative) weight vector.
  Index categorical(const Vector& weights) {
    const real_t total = weights.sum();
    real_t u = uniform01() * total;
    for (Index i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    return weights.size() - 1;
  }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace moehealth
