#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lutfuse/image.hpp"
#include "lutfuse/init.hpp"

namespace lutfuse {

using Rng = ad::Rng;

// out = clamp(β·(α·in)^γ, 0, 1) per channel.
struct ExposureParams {
    float alpha = 1.0f;
    float beta = 1.0f;
    float gamma = 1.0f;
};

enum class ExposureMode { under, over };

ImageRgb synth_exposure(const ImageRgb& img, const ExposureParams& p);

// α ~ U(0.9,1), β ~ U(0.5,1), γ ~ U(1.5,5), drawn in that order. Over
// mode returns (α, min(1/β, 2), 1/γ).
ExposureParams sample_exposure_params(Rng& rng, ExposureMode mode);

struct ExposureStack {
    std::vector<ImageRgb> images;  // ascending exposure
    std::optional<ImageRgb> ground_truth;

    int size() const { return static_cast<int>(images.size()); }
    int height() const { return images.empty() ? 0 : images.front().height(); }
    int width() const { return images.empty() ? 0 : images.front().width(); }
    // Throws ShapeError unless K >= 2 and all images (and the ground truth)
    // share one size.
    void validate() const;
};

// K=2: under, over. K=3: under, mid, over, where mid = (α·gt)^√γ_u with
// the under-exposure's α and γ. All members share α, so brightness is
// pixelwise ascending.
ExposureStack make_stack(const ImageRgb& gt, Rng& rng, int k);

// Half-pixel-centre bilinear resampling with edge clamping.
ImageRgb resize_bilinear(const ImageRgb& img, int h, int w);
ImageRgb center_crop(const ImageRgb& img, int h, int w);

// Deterministic synthetic scene: smooth colour gradients, soft-edged
// shapes and fine texture.
ImageRgb procedural_scene(int h, int w, std::uint64_t seed);

enum class Split { train, test };
const char* split_name(Split s);

struct ManifestRecord {
    Split split = Split::train;
    std::filesystem::path gt;
    std::vector<std::filesystem::path> exposures;
};

// Tab-separated: split, gt path, exposure paths in ascending order.
// Relative paths resolve against `root` (the manifest's directory).
struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestRecord> records;

    std::vector<const ManifestRecord*> split(Split s) const;
};

DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root);
// Also checks that every referenced file exists.
DatasetManifest read_manifest(const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& m);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);

// Marks round(test_fraction·n) records as test, chosen by a seeded shuffle.
std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed, double test_fraction = 0.3);

ExposureStack load_stack(const DatasetManifest& m, const ManifestRecord& r);

struct SynthSource {
    std::string name;
    ImageRgb image;
};

struct SynthOptions {
    int k = 3;
    std::uint64_t seed = 7;
    double test_fraction = 0.3;
    // Worker count for stack synthesis; results do not depend on it.
    int threads = 1;
};

// Writes <out>/<name>/{gt,ev0..ev(k-1)}.png for every source plus
// <out>/manifest.tsv, and returns the manifest. Record i draws its
// exposure parameters from mix_seed(seed, i).
DatasetManifest synthesize_dataset(const std::vector<SynthSource>& sources, const std::filesystem::path& out,
                                   const SynthOptions& opts);

// Procedural sources named scene000, scene001, ...
std::vector<SynthSource> procedural_sources(int count, int h, int w, std::uint64_t seed);

}  // namespace lutfuse
