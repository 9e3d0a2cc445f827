#pragma once

#include <filesystem>
#include <string_view>

#include "lutfuse/image.hpp"

namespace lutfuse {

// 8-bit PNG and binary PPM (P6). Samples map to [0,1] by /255 on read;
// writes round half-up after clamping to [0,1].
ImageRgb decode_ppm(std::string_view bytes);
std::string encode_ppm(const ImageRgb& img);
ImageRgb decode_png(std::string_view bytes);
std::string encode_png(const ImageRgb& img);

// Format is detected from the file's magic bytes.
ImageRgb read_image(const std::filesystem::path& path);
// Format is chosen by extension: .png or .ppm.
void write_image(const std::filesystem::path& path, const ImageRgb& img);

std::uint8_t quantize_u8(float v);

}  // namespace lutfuse
