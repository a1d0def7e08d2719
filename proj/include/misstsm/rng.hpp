#pragma once

#include <cstdint>
#include <random>

#include "misstsm/tensor.hpp"

namespace misstsm {

// splitmix64; used to derive independent substreams from (seed, index) pairs
// so per-variate streams stay stable when other dimensions change.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

// Uniform in [0,1) built from the top 53 engine bits. mt19937_64 output is
// pinned by the standard, so draws are bit-identical across platforms
// (std::uniform_real_distribution is not).
inline double canonical(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + canonical(rng) * (hi - lo);
}

// Box-Muller, again to keep draws implementation-independent.
inline double gaussian(Rng& rng) {
  double u1 = canonical(rng);
  while (u1 == 0.0) u1 = canonical(rng);
  const double u2 = canonical(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

// Uniform init scaled by fan-in, the usual choice for small dense layers.
inline Tensor glorot_uniform(std::vector<std::size_t> shape, Rng& rng) {
  std::size_t fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : shape.back();
  std::size_t fan_out = shape.back();
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (double& v : t.data) v = uniform(rng, -limit, limit);
  return t;
}

inline Tensor normal_init(std::vector<std::size_t> shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = stddev * gaussian(rng);
  return t;
}

// Fisher-Yates with the engine's raw output; std::shuffle is not pinned by
// the standard, this is.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace misstsm
