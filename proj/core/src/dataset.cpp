#include "lutfuse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lutfuse/error.hpp"
#include "lutfuse/image_io.hpp"
#include "lutfuse/parallel.hpp"

namespace lutfuse {

using ad::uniform;

ImageRgb synth_exposure(const ImageRgb& img, const ExposureParams& p) {
    if (!(p.alpha > 0.0f) || !(p.beta > 0.0f) || !(p.gamma > 0.0f)) {
        throw ConfigError("exposure parameters must be positive");
    }
    ImageRgb out(img.height(), img.width());
    auto src = img.pixels();
    auto dst = out.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const float x = std::max(0.0f, p.alpha * src[i]);
        dst[i] = std::clamp(p.beta * std::pow(x, p.gamma), 0.0f, 1.0f);
    }
    return out;
}

ExposureParams sample_exposure_params(Rng& rng, ExposureMode mode) {
    ExposureParams p;
    p.alpha = static_cast<float>(uniform(rng, 0.9, 1.0));
    p.beta = static_cast<float>(uniform(rng, 0.5, 1.0));
    p.gamma = static_cast<float>(uniform(rng, 1.5, 5.0));
    if (mode == ExposureMode::over) {
        p.beta = std::min(1.0f / p.beta, 2.0f);
        p.gamma = 1.0f / p.gamma;
    }
    return p;
}

void ExposureStack::validate() const {
    if (images.size() < 2) throw ShapeError("exposure stack needs at least 2 images, got " + std::to_string(images.size()));
    for (const auto& im : images) {
        if (im.height() != height() || im.width() != width()) {
            throw ShapeError("exposure stack images differ in size");
        }
    }
    if (ground_truth && (ground_truth->height() != height() || ground_truth->width() != width())) {
        throw ShapeError("ground truth size differs from the exposure stack");
    }
}

ExposureStack make_stack(const ImageRgb& gt, Rng& rng, int k) {
    if (k != 2 && k != 3) throw ConfigError("stack size must be 2 or 3, got " + std::to_string(k));
    const auto under = sample_exposure_params(rng, ExposureMode::under);
    auto over = sample_exposure_params(rng, ExposureMode::over);
    over.alpha = under.alpha;
    ExposureStack s;
    s.images.push_back(synth_exposure(gt, under));
    if (k == 3) s.images.push_back(synth_exposure(gt, {under.alpha, 1.0f, std::sqrt(under.gamma)}));
    s.images.push_back(synth_exposure(gt, over));
    s.ground_truth = gt;
    return s;
}

ImageRgb resize_bilinear(const ImageRgb& img, int h, int w) {
    if (h <= 0 || w <= 0) throw ConfigError("resize target must be positive");
    if (img.empty()) throw ShapeError("cannot resize an empty image");
    const int sh = img.height(), sw = img.width();
    ImageRgb out(h, w);
    const float fy = static_cast<float>(sh) / static_cast<float>(h);
    const float fx = static_cast<float>(sw) / static_cast<float>(w);
    for (int y = 0; y < h; ++y) {
        const float syf = std::clamp((static_cast<float>(y) + 0.5f) * fy - 0.5f, 0.0f, static_cast<float>(sh - 1));
        const int y0 = std::min(static_cast<int>(syf), sh - 1);
        const int y1 = std::min(y0 + 1, sh - 1);
        const float ty = syf - static_cast<float>(y0);
        for (int x = 0; x < w; ++x) {
            const float sxf = std::clamp((static_cast<float>(x) + 0.5f) * fx - 0.5f, 0.0f, static_cast<float>(sw - 1));
            const int x0 = std::min(static_cast<int>(sxf), sw - 1);
            const int x1 = std::min(x0 + 1, sw - 1);
            const float tx = sxf - static_cast<float>(x0);
            for (int c = 0; c < 3; ++c) {
                const float top = (1.0f - tx) * img.at(y0, x0, c) + tx * img.at(y0, x1, c);
                const float bot = (1.0f - tx) * img.at(y1, x0, c) + tx * img.at(y1, x1, c);
                out.at(y, x, c) = (1.0f - ty) * top + ty * bot;
            }
        }
    }
    return out;
}

ImageRgb center_crop(const ImageRgb& img, int h, int w) {
    if (h <= 0 || w <= 0 || h > img.height() || w > img.width()) {
        throw ConfigError("crop " + std::to_string(h) + "x" + std::to_string(w) + " does not fit a " +
                          std::to_string(img.height()) + "x" + std::to_string(img.width()) + " image");
    }
    const int oy = (img.height() - h) / 2, ox = (img.width() - w) / 2;
    ImageRgb out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y + oy, x + ox, c);
    return out;
}

ImageRgb procedural_scene(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    auto u = [&](double lo, double hi) { return static_cast<float>(uniform(rng, lo, hi)); };
    float corner[4][3];
    for (auto& cc : corner)
        for (float& v : cc) v = u(0.05, 0.95);
    ImageRgb img(h, w);
    for (int y = 0; y < h; ++y) {
        const float ty = h > 1 ? static_cast<float>(y) / static_cast<float>(h - 1) : 0.0f;
        for (int x = 0; x < w; ++x) {
            const float tx = w > 1 ? static_cast<float>(x) / static_cast<float>(w - 1) : 0.0f;
            for (int c = 0; c < 3; ++c) {
                const float top = (1 - tx) * corner[0][c] + tx * corner[1][c];
                const float bot = (1 - tx) * corner[2][c] + tx * corner[3][c];
                img.at(y, x, c) = (1 - ty) * top + ty * bot;
            }
        }
    }

    const int shapes = 5 + static_cast<int>(rng() % 8);
    for (int s = 0; s < shapes; ++s) {
        const bool ellipse = (rng() & 1) != 0;
        const float cx = u(0, w), cy = u(0, h);
        const float rx = u(0.05, 0.3) * static_cast<float>(w), ry = u(0.05, 0.3) * static_cast<float>(h);
        const float opacity = u(0.5, 1.0);
        float col[3];
        for (float& v : col) v = u(0.0, 1.0);
        const float edge = 1.5f;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float dx = (static_cast<float>(x) + 0.5f - cx), dy = (static_cast<float>(y) + 0.5f - cy);
                float dist;  // signed distance in pixels, negative inside
                if (ellipse) {
                    const float r = std::sqrt((dx * dx) / (rx * rx) + (dy * dy) / (ry * ry));
                    dist = (r - 1.0f) * std::min(rx, ry);
                } else {
                    dist = std::max(std::fabs(dx) - rx, std::fabs(dy) - ry);
                }
                const float a = opacity * std::clamp(0.5f - dist / (2.0f * edge), 0.0f, 1.0f);
                if (a <= 0.0f) continue;
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = (1 - a) * img.at(y, x, c) + a * col[c];
            }
    }

    const float fx = u(0.05, 0.4), fy = u(0.05, 0.4), phase = u(0, 6.28), amp = u(0.01, 0.06);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float t = amp * std::sin(fx * static_cast<float>(x) + phase) * std::cos(fy * static_cast<float>(y));
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(img.at(y, x, c) + t, 0.0f, 1.0f);
        }
    return img;
}

const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

std::vector<const ManifestRecord*> DatasetManifest::split(Split s) const {
    std::vector<const ManifestRecord*> out;
    for (const auto& r : records)
        if (r.split == s) out.push_back(&r);
    return out;
}

DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root) {
    DatasetManifest m;
    m.root = root;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string_view> fields;
        std::size_t b = 0;
        for (;;) {
            const auto t = line.find('\t', b);
            fields.push_back(line.substr(b, t == std::string_view::npos ? std::string_view::npos : t - b));
            if (t == std::string_view::npos) break;
            b = t + 1;
        }
        const auto where = "manifest line " + std::to_string(line_no) + ": ";
        if (fields.size() < 4) throw ParseError(where + "expected split, gt and at least 2 exposures");
        ManifestRecord r;
        if (fields[0] == "train") r.split = Split::train;
        else if (fields[0] == "test") r.split = Split::test;
        else throw ParseError(where + "unknown split '" + std::string(fields[0]) + "'");
        for (std::size_t i = 1; i < fields.size(); ++i)
            if (fields[i].empty()) throw ParseError(where + "empty path in field " + std::to_string(i + 1));
        r.gt = std::string(fields[1]);
        for (std::size_t i = 2; i < fields.size(); ++i) r.exposures.emplace_back(std::string(fields[i]));
        m.records.push_back(std::move(r));
    }
    for (std::size_t i = 0; i < m.records.size(); ++i)
        for (std::size_t j = i + 1; j < m.records.size(); ++j)
            if (m.records[i].split != m.records[j].split && m.records[i].gt == m.records[j].gt) {
                throw ParseError("manifest lists '" + m.records[i].gt.string() + "' in both splits");
            }
    return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open manifest '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    auto m = parse_manifest(ss.str(), path.parent_path());
    for (const auto& r : m.records) {
        auto check = [&](const std::filesystem::path& p) {
            if (!std::filesystem::exists(m.root / p)) throw IoError("manifest references missing file '" + p.string() + "'");
        };
        check(r.gt);
        for (const auto& p : r.exposures) check(p);
    }
    return m;
}

std::string format_manifest(const DatasetManifest& m) {
    std::string out = "# split\tgt\texposures (ascending)\n";
    for (const auto& r : m.records) {
        out += split_name(r.split);
        out += '\t';
        out += r.gt.generic_string();
        for (const auto& e : r.exposures) {
            out += '\t';
            out += e.generic_string();
        }
        out += '\n';
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << format_manifest(m);
    if (!f) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed, double test_fraction) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(n)));
    std::vector<Split> out(n, Split::train);
    for (std::size_t i = 0; i < n_test && i < n; ++i) out[order[i]] = Split::test;
    return out;
}

ExposureStack load_stack(const DatasetManifest& m, const ManifestRecord& r) {
    ExposureStack s;
    for (const auto& p : r.exposures) s.images.push_back(read_image(m.root / p));
    s.ground_truth = read_image(m.root / r.gt);
    s.validate();
    return s;
}

DatasetManifest synthesize_dataset(const std::vector<SynthSource>& sources, const std::filesystem::path& out,
                                   const SynthOptions& opts) {
    if (sources.empty()) throw ConfigError("no source images to synthesize from");
    if (opts.k != 2 && opts.k != 3) throw ConfigError("stack size must be 2 or 3, got " + std::to_string(opts.k));
    for (std::size_t i = 0; i < sources.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (sources[i].name == sources[j].name) throw ConfigError("duplicate source name '" + sources[i].name + "'");
        }
    }
    const auto splits = assign_splits(sources.size(), opts.seed, opts.test_fraction);
    DatasetManifest m;
    m.root = out;
    m.records.resize(sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i) {
        auto& r = m.records[i];
        r.split = splits[i];
        r.gt = std::filesystem::path(sources[i].name) / "gt.png";
        for (int e = 0; e < opts.k; ++e) r.exposures.push_back(std::filesystem::path(sources[i].name) / ("ev" + std::to_string(e) + ".png"));
        std::filesystem::create_directories(out / sources[i].name);
    }
    parallel_rows(static_cast<int>(sources.size()), opts.threads, [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            Rng rng(ad::mix_seed(opts.seed, static_cast<std::uint64_t>(i)));
            const auto stack = make_stack(sources[i].image, rng, opts.k);
            const auto& r = m.records[i];
            write_image(out / r.gt, sources[i].image);
            for (int e = 0; e < opts.k; ++e) write_image(out / r.exposures[e], stack.images[e]);
        }
    });
    write_manifest(out / "manifest.tsv", m);
    return m;
}

std::vector<SynthSource> procedural_sources(int count, int h, int w, std::uint64_t seed) {
    if (count < 1) throw ConfigError("source count must be at least 1");
    std::vector<SynthSource> out;
    char name[32];
    for (int i = 0; i < count; ++i) {
        std::snprintf(name, sizeof name, "scene%03d", i);
        out.push_back({name, procedural_scene(h, w, ad::mix_seed(seed, static_cast<std::uint64_t>(i)))});
    }
    return out;
}

}  // namespace lutfuse
