#include "lutfuse/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "lutfuse/error.hpp"
#include "lutfuse/parallel.hpp"

namespace lutfuse {

namespace {

template <typename... Args>
std::string printf_string(const char* fmt, Args... args) {
    const int n = std::snprintf(nullptr, 0, fmt, args...);
    std::string out(static_cast<std::size_t>(n), '\0');
    std::snprintf(out.data(), out.size() + 1, fmt, args...);
    return out;
}

void require_same_size(const ImageRgb& a, const ImageRgb& b, const char* what) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw ShapeError(printf_string("%s: %dx%d vs %dx%d", what, a.height(), a.width(), b.height(), b.width()));
    }
}

// Valid-mode separable filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& x, int h, int w, const std::vector<double>& k) {
    const int win = static_cast<int>(k.size());
    const int ow = w - win + 1, oh = h - win + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x0 = 0; x0 < ow; ++x0) {
            double acc = 0;
            for (int i = 0; i < win; ++i) acc += k[i] * x[static_cast<std::size_t>(y) * w + x0 + i];
            rows[static_cast<std::size_t>(y) * ow + x0] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y0 = 0; y0 < oh; ++y0)
        for (int x0 = 0; x0 < ow; ++x0) {
            double acc = 0;
            for (int i = 0; i < win; ++i) acc += k[i] * rows[static_cast<std::size_t>(y0 + i) * ow + x0];
            out[static_cast<std::size_t>(y0) * ow + x0] = acc;
        }
    return out;
}

}  // namespace

double psnr(const ImageRgb& a, const ImageRgb& b) {
    require_same_size(a, b, "psnr");
    if (a.empty()) throw ShapeError("psnr: empty images");
    double acc = 0;
    const auto pa = a.pixels(), pb = b.pixels();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const double d = static_cast<double>(pa[i]) - pb[i];
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(pa.size());
    if (mse < 1e-10) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageRgb& a, const ImageRgb& b, const SsimConfig& cfg) {
    require_same_size(a, b, "ssim");
    const int h = a.height(), w = a.width(), win = cfg.window;
    if (win < 1 || h < win || w < win) {
        throw ShapeError(printf_string("ssim: image %dx%d is smaller than the %d-pixel window", h, w, win));
    }
    std::vector<double> k(static_cast<std::size_t>(win));
    double ks = 0;
    for (int i = 0; i < win; ++i) {
        const double d = i - win / 2;
        k[i] = std::exp(-d * d / (2 * cfg.sigma * cfg.sigma));
        ks += k[i];
    }
    for (double& v : k) v /= ks;

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    double total = 0;
    std::size_t count = 0;
    std::vector<double> xa(plane), xb(plane), aa(plane), bb(plane), ab(plane);
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            xa[i] = a.pixels()[i * 3 + c];
            xb[i] = b.pixels()[i * 3 + c];
            aa[i] = xa[i] * xa[i];
            bb[i] = xb[i] * xb[i];
            ab[i] = xa[i] * xb[i];
        }
        const auto ma = filter_valid(xa, h, w, k), mb = filter_valid(xb, h, w, k);
        const auto saa = filter_valid(aa, h, w, k), sbb = filter_valid(bb, h, w, k), sab = filter_valid(ab, h, w, k);
        for (std::size_t i = 0; i < ma.size(); ++i) {
            const double va = saa[i] - ma[i] * ma[i], vb = sbb[i] - mb[i] * mb[i], cov = sab[i] - ma[i] * mb[i];
            total += ((2 * ma[i] * mb[i] + cfg.c1) * (2 * cov + cfg.c2)) /
                     ((ma[i] * ma[i] + mb[i] * mb[i] + cfg.c1) * (va + vb + cfg.c2));
        }
        count += ma.size();
    }
    return total / static_cast<double>(count);
}

ImageRgb gradient_image(int h, int w) {
    ImageRgb img(h, w);
    const float sx = w > 1 ? 1.0f / static_cast<float>(w - 1) : 0.0f;
    const float sy = h > 1 ? 1.0f / static_cast<float>(h - 1) : 0.0f;
    const float sd = h + w > 2 ? 1.0f / static_cast<float>(h + w - 2) : 0.0f;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = static_cast<float>(x) * sx;
            img.at(y, x, 1) = static_cast<float>(y) * sy;
            img.at(y, x, 2) = static_cast<float>(x + y) * sd;
        }
    return img;
}

BenchReport bench_apply(const Lut3d& lut, int h, int w, int threads, int iterations) {
    if (iterations < 3) throw ConfigError("bench needs at least 3 iterations");
    if (h < 1 || w < 1) throw ConfigError("bench image size must be positive");
    if (threads <= 0) threads = default_thread_count();
    const auto image = gradient_image(h, w);
    ImageRgb out(h, w);
    apply_into(lut, image, out, threads);

    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(iterations));
    for (int i = 0; i < iterations; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        apply_into(lut, image, out, threads);
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    BenchReport r;
    r.height = h;
    r.width = w;
    r.grid_n = lut.size();
    r.threads = threads;
    r.iterations = iterations;
    r.best_ms = *std::min_element(times.begin(), times.end());
    double sum = 0;
    for (double t : times) sum += t;
    r.mean_ms = std::max(r.best_ms, sum / iterations);
    r.pixels_per_second = static_cast<double>(h) * w / (r.mean_ms / 1000.0);
    return r;
}

std::string format_bench_text(const BenchReport& r) {
    return printf_string(
        "resolution         %dx%d\n"
        "grid               %d\n"
        "threads            %d\n"
        "iterations         %d\n"
        "best_ms            %.3f\n"
        "mean_ms            %.3f\n"
        "pixels_per_second  %.4g\n",
        r.width, r.height, r.grid_n, r.threads, r.iterations, r.best_ms, r.mean_ms, r.pixels_per_second);
}

std::string format_bench_tsv(const BenchReport& r) {
    return printf_string("%d\t%d\t%d\t%d\t%d\t%.3f\t%.3f\t%.6g", r.height, r.width, r.grid_n, r.threads,
                       r.iterations, r.best_ms, r.mean_ms, r.pixels_per_second);
}

}  // namespace lutfuse
