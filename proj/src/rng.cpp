// SPDX-License-Identifier: Apache-2.0
#include "plbert/rng.hpp"

#include <cmath>
#include <numbers>

namespace plbert {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) { return mix64(mix64(seed) ^ a); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix64(derive_seed(seed, a) ^ b);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(derive_seed(seed, a, b) ^ c);
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  // Rejection sampling on the top of the range keeps the draw exactly uniform.
  constexpr std::uint64_t kMax = ~std::uint64_t{0};
  const std::uint64_t excess = (kMax % n + 1) % n;  // 2^64 mod n
  std::uint64_t x = engine_();
  if (excess != 0) {
    while (x > kMax - excess) {
      x = engine_();
    }
  }
  return x % n;
}

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double stddev, double bound) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= bound) {
      return z * stddev;
    }
  }
}

}  // namespace plbert
