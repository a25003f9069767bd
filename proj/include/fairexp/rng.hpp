#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fairexp {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used only to derive child seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic child seed for (base, salt). Replications, and the outcome
// and assignment streams inside one trial, each get their own stream.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  return splitmix64(splitmix64(base) ^ splitmix64(~salt));
}

// Uniform on [0, 1) with 53 random bits. std::uniform_real_distribution is
// implementation-defined, so the raw engine output is mapped directly.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli_draw(Rng& rng, double p) { return uniform01(rng) < p; }

// Box-Muller, cosine branch only: every call consumes exactly two engine
// outputs, which keeps parallel streams aligned.
inline double normal_draw(Rng& rng) {
  constexpr double two_pi = 6.283185307179586;
  const double u = 1.0 - uniform01(rng);  // (0, 1]
  const double v = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(two_pi * v);
}

}  // namespace fairexp
