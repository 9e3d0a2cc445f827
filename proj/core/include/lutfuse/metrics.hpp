#pragma once

#include <string>

#include "lutfuse/image.hpp"
#include "lutfuse/lut.hpp"

namespace lutfuse {

inline constexpr double kPsnrCap = 100.0;

// 10·log10(1/MSE) for unit-range images, capped at 100 dB once
// MSE < 1e-10. ShapeError on size mismatch.
double psnr(const ImageRgb& a, const ImageRgb& b);

struct SsimConfig {
    int window = 11;
    double sigma = 1.5;
    double c1 = 1e-4;
    double c2 = 9e-4;
};

// Gaussian-windowed SSIM over valid window positions, averaged over
// channels and positions. ShapeError on size mismatch or when the image
// is smaller than the window.
double ssim(const ImageRgb& a, const ImageRgb& b, const SsimConfig& cfg = {});

struct BenchReport {
    int height = 0;
    int width = 0;
    int grid_n = 0;
    int threads = 0;
    int iterations = 0;
    double best_ms = 0.0;
    double mean_ms = 0.0;
    double pixels_per_second = 0.0;  // at the mean time
};

// Deterministic RGB gradient test pattern.
ImageRgb gradient_image(int h, int w);

// Times apply() of `lut` on a gradient_image(h, w) after one warm-up run.
// threads = 0 selects default_thread_count(). ConfigError when
// iterations < 3 or the size is not positive.
BenchReport bench_apply(const Lut3d& lut, int h, int w, int threads, int iterations);

std::string format_bench_text(const BenchReport& r);
// Header-free single line: h w grid threads iterations best mean px/s.
std::string format_bench_tsv(const BenchReport& r);

}  // namespace lutfuse
