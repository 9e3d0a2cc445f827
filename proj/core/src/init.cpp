#include "lutfuse/init.hpp"

#include <cmath>

namespace lutfuse::ad {

void kaiming_uniform(Tensor& t, std::int64_t fan_in, Rng& rng, float gain) {
    const double bound = static_cast<double>(gain) * std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& v : t.data()) v = static_cast<float>(uniform(rng, -bound, bound));
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace lutfuse::ad
