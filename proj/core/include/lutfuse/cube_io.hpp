#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "lutfuse/lut.hpp"

namespace lutfuse {

// Cube-LUT text: optional TITLE / DOMAIN_MIN / DOMAIN_MAX lines, a
// LUT_3D_SIZE header, then n³ rows of "r g b" with red varying fastest.
Lut3d parse_cube(std::string_view text);
std::string format_cube(const Lut3d& lut, std::string_view title = {});

Lut3d read_cube(const std::filesystem::path& path);
// Throws ConfigError unless the LUT is display-ready.
void write_cube(const std::filesystem::path& path, const Lut3d& lut, std::string_view title = {});

}  // namespace lutfuse
