#pragma once

#include <cfloat>
#include <cmath>

namespace lutfuse::detail {

// Position of a unit-range value on an n-point lattice axis: the lower
// lattice index and the fractional offset towards the next one.
struct AxisCell {
    int lo;
    float t;
};

// Maps v in [0,1] to continuous lattice coordinate v·(n-1) (aligned
// corners). Values within rounding distance of a lattice point snap to it
// so that sampling at i/(n-1) hits entry i exactly. NaN maps to 0.
inline AxisCell locate(float v, int n) {
    if (!(v > 0.0f)) v = 0.0f;
    if (v > 1.0f) v = 1.0f;
    const float span = static_cast<float>(n - 1);
    float x = v * span;
    const float nearest = static_cast<float>(static_cast<int>(x + 0.5f));
    if (std::fabs(x - nearest) <= 4.0f * FLT_EPSILON * span) x = nearest;
    int lo = static_cast<int>(x);
    if (lo > n - 2) lo = n - 2;
    return {lo, x - static_cast<float>(lo)};
}

}  // namespace lutfuse::detail
