#include "lutfuse/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lutfuse/error.hpp"

namespace lutfuse {

namespace {

constexpr unsigned char kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

std::string slurp(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing '" + path.string() + "'");
}

// Reads one unsigned decimal header field, skipping whitespace and
// '#' comments.
unsigned long ppm_field(std::string_view b, std::size_t& pos, const char* what) {
    for (;;) {
        while (pos < b.size() && std::isspace(static_cast<unsigned char>(b[pos]))) ++pos;
        if (pos < b.size() && b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    if (pos >= b.size()) throw ParseError(std::string("PPM truncated before ") + what + " at offset " + std::to_string(pos));
    if (!std::isdigit(static_cast<unsigned char>(b[pos]))) {
        throw ParseError(std::string("PPM: bad ") + what + " at offset " + std::to_string(pos));
    }
    unsigned long v = 0;
    while (pos < b.size() && std::isdigit(static_cast<unsigned char>(b[pos]))) {
        v = v * 10 + static_cast<unsigned long>(b[pos] - '0');
        if (v > 1'000'000) throw ParseError(std::string("PPM: ") + what + " too large at offset " + std::to_string(pos));
        ++pos;
    }
    return v;
}

}  // namespace

std::uint8_t quantize_u8(float v) {
    if (!(v > 0.0f)) return 0;
    if (v >= 1.0f) return 255;
    return static_cast<std::uint8_t>(std::floor(v * 255.0f + 0.5f));
}

ImageRgb decode_ppm(std::string_view b) {
    if (b.size() < 2 || b[0] != 'P' || b[1] != '6') throw ParseError("PPM: bad magic at offset 0 (expected P6)");
    std::size_t pos = 2;
    const auto w = ppm_field(b, pos, "width");
    const auto h = ppm_field(b, pos, "height");
    const auto maxval = ppm_field(b, pos, "maxval");
    if (w == 0 || h == 0) throw ParseError("PPM: zero image dimension");
    if (maxval == 0 || maxval > 65535) throw ParseError("PPM: maxval out of range at offset " + std::to_string(pos));
    if (pos >= b.size() || !std::isspace(static_cast<unsigned char>(b[pos]))) {
        throw ParseError("PPM: missing whitespace after header at offset " + std::to_string(pos));
    }
    ++pos;
    const std::size_t bps = maxval > 255 ? 2 : 1;
    const std::size_t need = static_cast<std::size_t>(w) * h * 3 * bps;
    if (b.size() - pos < need) {
        throw ParseError("PPM truncated: pixel data at offset " + std::to_string(pos) + " needs " +
                         std::to_string(need) + " bytes, found " + std::to_string(b.size() - pos));
    }
    ImageRgb img(static_cast<int>(h), static_cast<int>(w));
    auto px = img.pixels();
    const auto* p = reinterpret_cast<const unsigned char*>(b.data() + pos);
    const float inv = 1.0f / static_cast<float>(maxval);
    for (std::size_t i = 0; i < px.size(); ++i) {
        const unsigned v = bps == 2 ? (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1] : p[i];
        px[i] = std::min(1.0f, static_cast<float>(v) * inv);
    }
    return img;
}

std::string encode_ppm(const ImageRgb& img) {
    std::string out = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    const auto px = img.pixels();
    const auto header = out.size();
    out.resize(header + px.size());
    for (std::size_t i = 0; i < px.size(); ++i) out[header + i] = static_cast<char>(quantize_u8(px[i]));
    return out;
}

ImageRgb decode_png(std::string_view bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngMagic, 8) != 0) {
        std::size_t off = 0;
        while (off < std::min<std::size_t>(8, bytes.size()) &&
               static_cast<unsigned char>(bytes[off]) == kPngMagic[off])
            ++off;
        throw ParseError("PNG: bad signature at offset " + std::to_string(off));
    }
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw ParseError(std::string("PNG: ") + image.message);
    }
    if (image.width == 0 || image.height == 0) {
        png_image_free(&image);
        throw ParseError("PNG: zero image dimension");
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw ParseError("PNG: " + msg);
    }
    ImageRgb img(static_cast<int>(image.height), static_cast<int>(image.width));
    auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(buf[i]) / 255.0f;
    return img;
}

std::string encode_png(const ImageRgb& img) {
    std::vector<unsigned char> buf(img.pixels().size());
    const auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) buf[i] = quantize_u8(px[i]);
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, buf.data(), 0, nullptr)) {
        throw IoError(std::string("PNG encode: ") + image.message);
    }
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, buf.data(), 0, nullptr)) {
        throw IoError(std::string("PNG encode: ") + image.message);
    }
    out.resize(size);
    return out;
}

ImageRgb read_image(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    try {
        if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
        if (!bytes.empty() && static_cast<unsigned char>(bytes[0]) == 0x89) return decode_png(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    throw ParseError(path.string() + ": unsupported image format (bad magic at offset 0)");
}

void write_image(const std::filesystem::path& path, const ImageRgb& img) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return spit(path, encode_png(img));
    if (ext == ".ppm") return spit(path, encode_ppm(img));
    throw ConfigError("unsupported image extension '" + ext + "' (use .png or .ppm)");
}

}  // namespace lutfuse
