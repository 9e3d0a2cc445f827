#pragma once

#include <cstdint>
#include <random>

#include "lutfuse/tensor.hpp"

namespace lutfuse::ad {

using Rng = std::mt19937_64;

// Uniform double in [0,1) from the top 53 bits; portable across standard
// libraries, unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// U(-b, b) with b = gain · sqrt(6 / fan_in) (Kaiming-uniform for ReLU at gain 1).
void kaiming_uniform(Tensor& t, std::int64_t fan_in, Rng& rng, float gain = 1.0f);

// splitmix64 finaliser; used to derive independent seeds from (seed, index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace lutfuse::ad
