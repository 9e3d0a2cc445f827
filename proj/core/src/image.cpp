#include "lutfuse/image.hpp"

#include <cmath>
#include <string>

#include "lutfuse/error.hpp"

namespace lutfuse {

ImageRgb::ImageRgb(int height, int width, float fill) : height_(height), width_(width) {
    if (height <= 0 || width <= 0) {
        throw ShapeError("image dimensions must be positive, got " + std::to_string(height) + "x" + std::to_string(width));
    }
    pixels_.assign(pixel_count() * 3, fill);
}

ImageRgb::ImageRgb(int height, int width, std::vector<float> pixels) : ImageRgb(height, width) {
    if (pixels.size() != pixels_.size()) throw ShapeError("image pixel buffer has the wrong length");
    pixels_ = std::move(pixels);
}

std::vector<float> ImageRgb::to_planar() const {
    const std::size_t p = pixel_count();
    std::vector<float> out(p * 3);
    for (std::size_t i = 0; i < p; ++i)
        for (int c = 0; c < 3; ++c) out[c * p + i] = pixels_[i * 3 + c];
    return out;
}

ImageRgb ImageRgb::from_planar(int height, int width, std::span<const float> planar) {
    ImageRgb img(height, width);
    const std::size_t p = img.pixel_count();
    if (planar.size() != p * 3) throw ShapeError("planar buffer does not match image size");
    for (std::size_t i = 0; i < p; ++i)
        for (int c = 0; c < 3; ++c) img.pixels_[i * 3 + c] = planar[c * p + i];
    return img;
}

bool ImageRgb::all_finite() const {
    for (float v : pixels_)
        if (!std::isfinite(v)) return false;
    return true;
}

double ImageRgb::mean() const {
    double acc = 0.0;
    for (float v : pixels_) acc += v;
    return pixels_.empty() ? 0.0 : acc / static_cast<double>(pixels_.size());
}

}  // namespace lutfuse
