#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace strkm {

/// splitmix64 finalizer. Used to expand a seed into generator state and to
/// derive independent sub-seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Sub-seed for stream `stream` of a run seeded with `seed`:
/// the first splitmix64 output from state `seed + stream * 0x9E3779B97F4A7C15`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t s = seed + stream * 0x9E3779B97F4A7C15ULL;
  return splitmix64(s);
}

/// xoshiro256** 1.0 (Blackman & Vigna), state filled from splitmix64(seed).
///
/// Derived draws:
///  - uniform(): top 53 bits of next() times 2^-53, in [0, 1).
///  - normal(): Box-Muller on two uniforms u1, u2, returning
///    sqrt(-2 ln(1 - u1)) * cos(2 pi u2). No value is cached.
///  - below(n): floor(uniform() * n).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  std::size_t below(std::size_t n) noexcept {
    auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t seed_;
  std::uint64_t s_[4]{};
};

}  // namespace strkm
