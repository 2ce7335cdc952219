#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <vector>

#include "corefed/errors.hpp"

// Seeded sampling primitives with a pinned algorithm for every draw.
// std::mt19937_64 has a standardized bit stream, but the std::*_distribution
// adaptors do not, so all distribution logic lives here: results are
// bit-reproducible across platforms and re-derivable by reference
// implementations in the test suite.

namespace corefed::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Engine seeded from a base seed plus a stream tag, so independent draws
// (per agent, per round, per label) never share a sequence.
inline std::mt19937_64 make_engine(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> stream = {}) {
  std::uint64_t s = seed;
  std::uint64_t mixed = splitmix64(s);
  for (std::uint64_t tag : stream) {
    s ^= tag + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    mixed = splitmix64(s);
  }
  return std::mt19937_64(mixed);
}

// Uniform double in [0, 1) using the top 53 bits of one engine output.
inline double uniform01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller (no rejection, two uniforms per draw).
inline double normal(std::mt19937_64& eng) {
  double u1 = 1.0 - uniform01(eng);  // (0, 1], keeps log away from 0
  double u2 = uniform01(eng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled with the usual
// u^(1/shape) boost.
inline double gamma(std::mt19937_64& eng, double shape) {
  if (!(shape > 0.0)) throw InvalidParams("gamma: shape must be > 0");
  if (shape < 1.0) {
    double u = 1.0 - uniform01(eng);
    return gamma(eng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal(eng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = 1.0 - uniform01(eng);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

// Symmetric Dirichlet(alpha) over n coordinates.
inline std::vector<double> dirichlet(std::mt19937_64& eng, double alpha, int n) {
  std::vector<double> draws(static_cast<std::size_t>(n));
  double total = 0.0;
  for (auto& g : draws) {
    g = gamma(eng, alpha);
    total += g;
  }
  if (total <= 0.0) throw NumericOverflow("dirichlet: degenerate gamma draws");
  for (auto& g : draws) g /= total;
  return draws;
}

// k distinct indices from {0, ..., n-1}, uniform without replacement
// (partial Fisher-Yates), returned in ascending order.
inline std::vector<int> sample_without_replacement(std::mt19937_64& eng, int n, int k) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    // uniform index in [i, n)
    auto j = i + static_cast<int>(eng() % static_cast<std::uint64_t>(n - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace corefed::rng
