#include "lutfuse/cube_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lutfuse/error.hpp"

namespace lutfuse {

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
    throw ParseError("cube line " + std::to_string(line) + ": " + msg);
}

bool parse_float(std::string_view tok, float& out) {
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc() && p == tok.data() + tok.size();
}

// Splits on whitespace into at most `max` tokens; returns the count found.
std::size_t split(std::string_view s, std::string_view* toks, std::size_t max) {
    std::size_t n = 0;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        if (i >= s.size()) break;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (n == max) return max + 1;
        toks[n++] = s.substr(i, j - i);
        i = j;
    }
    return n;
}

}  // namespace

Lut3d parse_cube(std::string_view text) {
    int n = 0;
    std::vector<float> values;
    std::size_t expected = 0;
    std::size_t line_no = 0;
    std::size_t last_data_line = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;

        std::string_view toks[4];
        const auto count = split(line, toks, 4);
        const char c0 = line.front();
        const bool numeric = (c0 >= '0' && c0 <= '9') || c0 == '-' || c0 == '+' || c0 == '.';
        if (!numeric) {
            const auto key = toks[0];
            if (key == "TITLE") continue;
            if (key == "LUT_1D_SIZE") fail(line_no, "1D LUTs are not supported");
            if (key == "LUT_3D_SIZE") {
                if (n != 0) fail(line_no, "duplicate LUT_3D_SIZE");
                int v = 0;
                auto [p, ec] = std::from_chars(toks[1].data(), toks[1].data() + toks[1].size(), v);
                if (count != 2 || ec != std::errc() || p != toks[1].data() + toks[1].size() || v < 2 || v > 256) {
                    fail(line_no, "bad LUT_3D_SIZE");
                }
                n = v;
                expected = static_cast<std::size_t>(n) * n * n;
                values.reserve(expected * 3);
                continue;
            }
            if (key == "DOMAIN_MIN" || key == "DOMAIN_MAX") {
                float v[3];
                if (count != 4) fail(line_no, "expected three values after " + std::string(key));
                for (int c = 0; c < 3; ++c)
                    if (!parse_float(toks[c + 1], v[c])) fail(line_no, "bad number '" + std::string(toks[c + 1]) + "'");
                const float want = key == "DOMAIN_MIN" ? 0.0f : 1.0f;
                if (v[0] != want || v[1] != want || v[2] != want) fail(line_no, "only the unit domain is supported");
                continue;
            }
            fail(line_no, "unknown keyword '" + std::string(key) + "'");
        }
        if (n == 0) fail(line_no, "data row before LUT_3D_SIZE");
        if (count != 3) fail(line_no, "expected 3 values per row, got " + std::to_string(count > 3 ? 4 : count));
        if (values.size() == expected * 3) fail(line_no, "more than the expected " + std::to_string(expected) + " rows");
        for (int c = 0; c < 3; ++c) {
            float v = 0.0f;
            if (!parse_float(toks[c], v)) fail(line_no, "bad number '" + std::string(toks[c]) + "'");
            values.push_back(v);
        }
        last_data_line = line_no;
    }
    if (n == 0) throw ParseError("cube file has no LUT_3D_SIZE header");
    if (values.size() != expected * 3) {
        throw ParseError("cube line " + std::to_string(last_data_line) + ": expected " + std::to_string(expected) +
                         " data rows for LUT_3D_SIZE " + std::to_string(n) + ", found " +
                         std::to_string(values.size() / 3));
    }
    return Lut3d(n, std::move(values));
}

std::string format_cube(const Lut3d& lut, std::string_view title) {
    std::string out;
    if (!title.empty()) out += "TITLE \"" + std::string(title) + "\"\n";
    out += "LUT_3D_SIZE " + std::to_string(lut.size()) + "\n";
    out += "DOMAIN_MIN 0.0 0.0 0.0\nDOMAIN_MAX 1.0 1.0 1.0\n";
    auto v = lut.values();
    out.reserve(out.size() + v.size() / 3 * 27);
    char buf[64];
    for (std::size_t i = 0; i < v.size(); i += 3) {
        const int len = std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f\n", v[i], v[i + 1], v[i + 2]);
        out.append(buf, static_cast<std::size_t>(len));
    }
    return out;
}

Lut3d read_cube(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_cube(ss.str());
}

void write_cube(const std::filesystem::path& path, const Lut3d& lut, std::string_view title) {
    if (!lut.display_ready()) throw ConfigError("refusing to write a LUT with values outside [0,1]");
    const auto text = format_cube(lut, title);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << text;
    if (!f) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace lutfuse
