#pragma once

// Random-number plumbing: the engine type, counter-based stream splitting, and
// the few primitive draws every module needs.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>

#include "nanbu/linalg.hpp"

namespace nanbu {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of stream `index` under `master`. Distinct (master, purpose, index)
/// triples give statistically independent engines.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t purpose = 0) {
  return mix64(mix64(master ^ mix64(purpose + 0x51ed270b27ac3f1dULL)) + index);
}

inline Engine make_engine(std::uint64_t master, std::uint64_t index = 0, std::uint64_t purpose = 0) {
  return Engine(derive_seed(master, index, purpose));
}

template <std::uniform_random_bit_generator G>
double uniform01(G& g) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(g);
}

template <std::uniform_random_bit_generator G>
double standard_normal(G& g) {
  return std::normal_distribution<double>(0.0, 1.0)(g);
}

template <std::uniform_random_bit_generator G>
Vec gaussian_vec(int dim, G& g) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec x(dim);
  for (int i = 0; i < dim; ++i) x[i] = nd(g);
  return x;
}

/// Uniform point on S^{dim-1}.
template <std::uniform_random_bit_generator G>
Vec uniform_direction(int dim, G& g) {
  for (;;) {
    Vec x = gaussian_vec(dim, g);
    const double r = norm(x);
    if (r > 1e-8) return x * (1.0 / r);
  }
}

/// X ~ Beta(a, b) by the ratio of Gammas.
template <std::uniform_random_bit_generator G>
double beta_sample(double a, double b, G& g) {
  for (;;) {
    const double x = std::gamma_distribution<double>(a, 1.0)(g);
    const double y = std::gamma_distribution<double>(b, 1.0)(g);
    if (x + y > 0.0) return x / (x + y);
  }
}

}  // namespace nanbu
