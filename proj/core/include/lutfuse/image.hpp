#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lutfuse {

// Interleaved RGB float image, nominally in [0,1].
class ImageRgb {
public:
    ImageRgb() = default;
    ImageRgb(int height, int width, float fill = 0.0f);
    ImageRgb(int height, int width, std::vector<float> pixels);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_); }
    bool empty() const { return pixels_.empty(); }

    float& at(int y, int x, int c) { return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
    float at(int y, int x, int c) const { return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }

    std::span<float> pixels() { return pixels_; }
    std::span<const float> pixels() const { return pixels_; }

    // Channel-planar copy [3][H][W] and its inverse.
    std::vector<float> to_planar() const;
    static ImageRgb from_planar(int height, int width, std::span<const float> planar);

    bool all_finite() const;
    double mean() const;

    friend bool operator==(const ImageRgb&, const ImageRgb&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> pixels_;
};

}  // namespace lutfuse
