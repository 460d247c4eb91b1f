#pragma once

#include <cstdint>
#include <random>

namespace emoma {

// mt19937_64's output sequence is fixed by the standard; the reductions below
// avoid std::uniform_*_distribution so results are identical across stdlibs.
using Rng = std::mt19937_64;

/// Uniform integer in [0, n). n must be > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

/// Uniform double in [0, 1) with 53 bits of resolution.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// True with probability p.
inline bool bernoulli(Rng& rng, double p) {
  return uniform_unit(rng) < p;
}

}  // namespace emoma
