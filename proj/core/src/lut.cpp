#include "lutfuse/lut.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstring>
#include <string>

#include "lutfuse/detail/lattice.hpp"
#include "lutfuse/error.hpp"
#include "lutfuse/parallel.hpp"

namespace lutfuse {

using detail::locate;

Lut3d::Lut3d(int n, float fill) : n_(n) {
    if (n < 2) throw ConfigError("LUT size must be >= 2, got " + std::to_string(n));
    values_.assign(entry_count() * 3, fill);
}

Lut3d::Lut3d(int n, std::vector<float> values) : Lut3d(n) {
    if (values.size() != values_.size()) {
        throw ShapeError("LUT of size " + std::to_string(n) + " needs " + std::to_string(values_.size()) +
                         " values, got " + std::to_string(values.size()));
    }
    values_ = std::move(values);
}

bool Lut3d::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

bool Lut3d::display_ready() const {
    return std::all_of(values_.begin(), values_.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

Lut3d identity_lut(int n) {
    Lut3d lut(n);
    for (int b = 0; b < n; ++b)
        for (int g = 0; g < n; ++g)
            for (int r = 0; r < n; ++r) {
                lut.at(r, g, b, 0) = lattice_value(r, n);
                lut.at(r, g, b, 1) = lattice_value(g, n);
                lut.at(r, g, b, 2) = lattice_value(b, n);
            }
    return lut;
}

namespace {

// a + t·(b − a): exact at t = 0, returns a when a == b, and returns b at
// t = 1 (the top cell of each axis).
inline float lerp(float a, float b, float t) {
    const float x = a + t * (b - a);
    return t == 1.0f ? b : x;
}

inline void sample_into(const float* v, int n, const float* rgb, float* out) {
    const auto cr = locate(rgb[0], n);
    const auto cg = locate(rgb[1], n);
    const auto cb = locate(rgb[2], n);
    const std::size_t sg = static_cast<std::size_t>(n) * 3;
    const std::size_t sb = sg * static_cast<std::size_t>(n);
    const float* p = v + static_cast<std::size_t>(cb.lo) * sb + static_cast<std::size_t>(cg.lo) * sg +
                     static_cast<std::size_t>(cr.lo) * 3;
    for (int c = 0; c < 3; ++c) {
        const float c00 = lerp(p[c], p[3 + c], cr.t);
        const float c10 = lerp(p[sg + c], p[sg + 3 + c], cr.t);
        const float c01 = lerp(p[sb + c], p[sb + 3 + c], cr.t);
        const float c11 = lerp(p[sb + sg + c], p[sb + sg + 3 + c], cr.t);
        out[c] = lerp(lerp(c00, c10, cg.t), lerp(c01, c11, cg.t), cb.t);
    }
}

// Copy of a LUT with one extra lattice layer on each upper face (edge
// replicated) plus one float of tail padding. With it the top lattice
// point is addressed as cell n-1 at t = 0, so the hot loop needs neither
// the n-2 cap nor the t = 1 special case, and every corner can be read as
// four floats.
struct PaddedLut {
    std::vector<float> v;
    std::size_t sg = 0, sb = 0;
    float span = 0.0f;

    explicit PaddedLut(const Lut3d& lut) {
        const int n = lut.size(), m = n + 1;
        sg = static_cast<std::size_t>(m) * 3;
        sb = sg * static_cast<std::size_t>(m);
        span = static_cast<float>(n - 1);
        v.assign(sb * static_cast<std::size_t>(m) + 1, 0.0f);
        const auto src = lut.values();
        for (int b = 0; b < m; ++b)
            for (int g = 0; g < m; ++g)
                for (int r = 0; r < m; ++r)
                    std::memcpy(&v[b * sb + g * sg + static_cast<std::size_t>(r) * 3],
                                &src[lut.offset(std::min(r, n - 1), std::min(g, n - 1), std::min(b, n - 1))],
                                3 * sizeof(float));
    }
};

typedef float Vec4 __attribute__((vector_size(16)));

inline Vec4 load4(const float* p) {
    Vec4 r;
    std::memcpy(&r, p, sizeof r);
    return r;
}

inline Vec4 lerp4(Vec4 a, Vec4 b, float t) { return a + t * (b - a); }

// Same snapping as detail::locate, without the n-2 cap.
inline detail::AxisCell locate_padded(float v, float span) {
    v = v > 0.0f ? v : 0.0f;
    v = v < 1.0f ? v : 1.0f;
    float x = v * span;
    const float nearest = static_cast<float>(static_cast<int>(x + 0.5f));
    if (std::fabs(x - nearest) <= 4.0f * FLT_EPSILON * span) x = nearest;
    const int lo = static_cast<int>(x);
    return {lo, x - static_cast<float>(lo)};
}

void apply_span(const PaddedLut& lut, const float* src, float* dst, std::size_t pixels) {
    const float* v = lut.v.data();
    const std::size_t sg = lut.sg, sb = lut.sb;
    const float span = lut.span;
    const Vec4 zero = {0, 0, 0, 0}, one = {1, 1, 1, 1};
    for (std::size_t i = 0; i < pixels; ++i) {
        const float* rgb = src + i * 3;
        const auto cr = locate_padded(rgb[0], span);
        const auto cg = locate_padded(rgb[1], span);
        const auto cb = locate_padded(rgb[2], span);
        const float* p = v + static_cast<std::size_t>(cb.lo) * sb + static_cast<std::size_t>(cg.lo) * sg +
                         static_cast<std::size_t>(cr.lo) * 3;
        const Vec4 c00 = lerp4(load4(p), load4(p + 3), cr.t);
        const Vec4 c10 = lerp4(load4(p + sg), load4(p + sg + 3), cr.t);
        const Vec4 c01 = lerp4(load4(p + sb), load4(p + sb + 3), cr.t);
        const Vec4 c11 = lerp4(load4(p + sb + sg), load4(p + sb + sg + 3), cr.t);
        Vec4 out = lerp4(lerp4(c00, c10, cg.t), lerp4(c01, c11, cg.t), cb.t);
        out = out < zero ? zero : out;
        out = out > one ? one : out;
        float* d = dst + i * 3;
        d[0] = out[0];
        d[1] = out[1];
        d[2] = out[2];
    }
}

}  // namespace

std::array<float, 3> sample_trilinear(const Lut3d& lut, std::array<float, 3> rgb) {
    std::array<float, 3> out{};
    sample_into(lut.values().data(), lut.size(), rgb.data(), out.data());
    return out;
}

void apply_into(const Lut3d& lut, const ImageRgb& image, ImageRgb& out, int threads) {
    if (out.height() != image.height() || out.width() != image.width()) {
        throw ShapeError("apply_into: output image size differs from input");
    }
    if (threads <= 0) threads = default_thread_count();
    const PaddedLut padded(lut);
    const std::size_t row = static_cast<std::size_t>(image.width()) * 3;
    const float* src = image.pixels().data();
    float* dst = out.pixels().data();
    parallel_rows(image.height(), threads, [&](int y0, int y1) {
        apply_span(padded, src + row * y0, dst + row * y0, static_cast<std::size_t>(y1 - y0) * row / 3);
    });
}

ImageRgb apply(const Lut3d& lut, const ImageRgb& image, int threads) {
    ImageRgb out(image.height(), image.width());
    apply_into(lut, image, out, threads);
    return out;
}

Lut3d fuse_weighted(std::span<const Lut3d> luts, const FusionWeights& weights) {
    if (luts.empty()) throw ShapeError("fuse_weighted: no LUTs");
    if (luts.size() != weights.w.size()) {
        throw ShapeError("fuse_weighted: " + std::to_string(luts.size()) + " LUTs but " +
                         std::to_string(weights.w.size()) + " weights");
    }
    const int n = luts.front().size();
    Lut3d out(n);
    auto o = out.values();
    for (std::size_t k = 0; k < luts.size(); ++k) {
        if (luts[k].size() != n) throw ShapeError("fuse_weighted: LUT sizes differ");
        auto v = luts[k].values();
        const float wk = weights.w[k];
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += wk * v[i];
    }
    return out;
}

LutStats lut_stats(const Lut3d& lut) {
    LutStats s;
    auto v = lut.values();
    double sum = 0.0;
    s.min = v.front();
    s.max = v.front();
    for (float x : v) {
        sum += x;
        s.min = std::min(s.min, x);
        s.max = std::max(s.max, x);
    }
    s.mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (float x : v) ss += (x - s.mean) * (x - s.mean);
    s.variance = ss / static_cast<double>(v.size());
    const double range = static_cast<double>(s.max) - s.min;
    for (float x : v) {
        std::size_t bin = 0;
        if (range > 0.0) {
            bin = static_cast<std::size_t>((static_cast<double>(x) - s.min) / range * 64.0);
            bin = std::min<std::size_t>(bin, 63);
        }
        ++s.histogram[bin];
    }
    return s;
}

}  // namespace lutfuse
