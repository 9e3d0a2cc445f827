#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "lutfuse/image.hpp"

namespace lutfuse {

// n×n×n lattice of RGB outputs. Lattice axes are (r, g, b); storage is
// R-fastest: entry (r,g,b) starts at ((b·n + g)·n + r)·3.
class Lut3d {
public:
    explicit Lut3d(int n, float fill = 0.0f);
    Lut3d(int n, std::vector<float> values);

    int size() const { return n_; }
    std::size_t entry_count() const { return static_cast<std::size_t>(n_) * n_ * n_; }

    std::span<float> values() { return values_; }
    std::span<const float> values() const { return values_; }

    std::size_t offset(int r, int g, int b) const {
        return ((static_cast<std::size_t>(b) * n_ + g) * n_ + r) * 3;
    }
    float& at(int r, int g, int b, int c) { return values_[offset(r, g, b) + c]; }
    float at(int r, int g, int b, int c) const { return values_[offset(r, g, b) + c]; }

    bool all_finite() const;
    // All entries finite and within [0,1].
    bool display_ready() const;

    friend bool operator==(const Lut3d&, const Lut3d&) = default;

private:
    int n_;
    std::vector<float> values_;
};

struct FusionWeights {
    std::vector<float> w;
};

// Entry (r,g,b) = (r,g,b)/(n-1).
Lut3d identity_lut(int n);

// Lattice value of axis index i: i/(n-1), exact at both ends.
inline float lattice_value(int i, int n) { return static_cast<float>(i) / static_cast<float>(n - 1); }

// Trilinear blend of the 8 lattice corners around rgb (clamped to [0,1]).
std::array<float, 3> sample_trilinear(const Lut3d& lut, std::array<float, 3> rgb);

// Per-pixel sample_trilinear, output clamped to [0,1]. Rows are split into
// bands across `threads` workers (0 = default_thread_count()); the result
// does not depend on the thread count.
ImageRgb apply(const Lut3d& lut, const ImageRgb& image, int threads = 0);
// In-place variant writing into a preallocated output of the same size.
void apply_into(const Lut3d& lut, const ImageRgb& image, ImageRgb& out, int threads = 0);

// Elementwise Σ w_i · luts_i.
Lut3d fuse_weighted(std::span<const Lut3d> luts, const FusionWeights& weights);

struct LutStats {
    double mean = 0.0;
    double variance = 0.0;
    float min = 0.0f;
    float max = 0.0f;
    // 64 equal bins over [min, max]; the top edge falls in the last bin.
    std::array<std::uint64_t, 64> histogram{};
};

LutStats lut_stats(const Lut3d& lut);

}  // namespace lutfuse
