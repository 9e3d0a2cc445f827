#include <gtest/gtest.h>

#include <cmath>
#include <bit>
#include <filesystem>
#include <random>

#include "lutfuse/cube_io.hpp"
#include "lutfuse/error.hpp"
#include "lutfuse/lut.hpp"
#include "support/reference.hpp"

using namespace lutfuse;

namespace {

Lut3d random_lut(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Lut3d lut(n);
    for (float& v : lut.values()) v = u(rng);
    return lut;
}

ImageRgb random_image(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ImageRgb img(h, w);
    for (float& v : img.pixels()) v = u(rng);
    return img;
}

}  // namespace

TEST(Lut, RejectsTinyGrid) {
    EXPECT_THROW(Lut3d(1), ConfigError);
    EXPECT_THROW(identity_lut(1), ConfigError);
}

TEST(Lut, IdentityN2IsUnitCubeCorners) {
    auto lut = identity_lut(2);
    for (int b = 0; b < 2; ++b)
        for (int g = 0; g < 2; ++g)
            for (int r = 0; r < 2; ++r) {
                EXPECT_EQ(lut.at(r, g, b, 0), r);
                EXPECT_EQ(lut.at(r, g, b, 1), g);
                EXPECT_EQ(lut.at(r, g, b, 2), b);
            }
}

TEST(Lut, IdentityInvarianceAcrossSizes) {
    const auto img = random_image(37, 41, 3);
    for (int n : {2, 8, 33, 64}) {
        const auto out = apply(identity_lut(n), img, 1);
        for (std::size_t i = 0; i < img.pixels().size(); ++i) ASSERT_NEAR(out.pixels()[i], img.pixels()[i], 1e-6) << n;
    }
}

TEST(Lut, IdentitySamplesReturnInput) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int n : {2, 3, 17, 64})
        for (int i = 0; i < 200; ++i) {
            const std::array<float, 3> rgb = {u(rng), u(rng), u(rng)};
            const auto out = sample_trilinear(identity_lut(n), rgb);
            for (int c = 0; c < 3; ++c) EXPECT_NEAR(out[c], rgb[c], 1e-6);
        }
}

TEST(Lut, LatticeExactnessIsBitwise) {
    for (int n : {2, 5, 17, 33, 64}) {
        const auto lut = random_lut(n, static_cast<std::uint64_t>(n));
        for (int b = 0; b < n; ++b)
            for (int g = 0; g < n; ++g)
                for (int r = 0; r < n; ++r) {
                    const auto out = sample_trilinear(lut, {lattice_value(r, n), lattice_value(g, n), lattice_value(b, n)});
                    for (int c = 0; c < 3; ++c) ASSERT_EQ(std::bit_cast<std::uint32_t>(out[c]), std::bit_cast<std::uint32_t>(lut.at(r, g, b, c)));
                }
    }
}

TEST(Lut, AxisMidpointIsMean) {
    const auto lut = random_lut(5, 11);
    const auto out = sample_trilinear(lut, {0.375f, 0.5f, 0.25f});  // between r=1 and r=2
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(out[c], 0.5f * (lut.at(1, 2, 1, c) + lut.at(2, 2, 1, c)), 1e-6);
}

TEST(Lut, TrilinearMatchesEightCornerBruteForce) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int n : {2, 9, 33}) {
        const auto lut = random_lut(n, 100 + static_cast<std::uint64_t>(n));
        const std::vector<double> dv(lut.values().begin(), lut.values().end());
        for (int i = 0; i < 2000; ++i) {
            const std::array<float, 3> rgb = {u(rng), u(rng), u(rng)};
            const auto out = sample_trilinear(lut, rgb);
            const auto want = ref::lut_sample(dv, n, {rgb[0], rgb[1], rgb[2]});
            for (int c = 0; c < 3; ++c) ASSERT_NEAR(out[c], want[c], 1e-6);
        }
    }
}

TEST(Lut, OutOfRangeInputIsClamped) {
    const auto lut = random_lut(4, 2);
    const auto a = sample_trilinear(lut, {-0.5f, 2.0f, std::nanf("")});
    const auto b = sample_trilinear(lut, {0.0f, 1.0f, 0.0f});
    EXPECT_EQ(a, b);
}

TEST(Lut, ConstantLutGivesConstantImage) {
    const auto out = apply(Lut3d(7, 0.5f), random_image(9, 8, 1));
    for (float v : out.pixels()) EXPECT_EQ(v, 0.5f);
}

TEST(Lut, ApplyClampsOutput) {
    Lut3d lut(2, 1.7f);
    lut.values()[0] = -3.0f;
    const auto out = apply(lut, random_image(5, 5, 8));
    for (float v : out.pixels()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}

TEST(Lut, ApplyIndependentOfThreadCount) {
    const auto lut = random_lut(33, 5);
    const auto img = random_image(97, 61, 6);
    const auto one = apply(lut, img, 1);
    for (int t : {2, 3, 8, 200}) EXPECT_TRUE(apply(lut, img, t) == one) << t;
}

TEST(Lut, MonotoneBlending) {
    auto a = random_lut(6, 7);
    Lut3d b = a;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 0.2f);
    for (float& v : b.values()) v += u(rng);
    std::uniform_real_distribution<float> c(0.0f, 1.0f);
    for (int i = 0; i < 1000; ++i) {
        const std::array<float, 3> rgb = {c(rng), c(rng), c(rng)};
        const auto sa = sample_trilinear(a, rgb), sb = sample_trilinear(b, rgb);
        for (int k = 0; k < 3; ++k) EXPECT_LE(sa[k], sb[k]);
    }
}

TEST(Lut, FuseWeightedExamples) {
    std::vector<Lut3d> luts = {random_lut(4, 1), random_lut(4, 2), random_lut(4, 3)};
    EXPECT_TRUE(fuse_weighted(luts, {{1, 0, 0}}) == luts[0]);

    std::vector<Lut3d> same(3, luts[1]);
    const auto f = fuse_weighted(same, {{0.2f, 0.5f, 0.3f}});
    for (std::size_t i = 0; i < f.values().size(); ++i) EXPECT_NEAR(f.values()[i], luts[1].values()[i], 1e-6);

    std::vector<Lut3d> two = {luts[0], luts[2]};
    const auto m = fuse_weighted(two, {{0.5f, 0.5f}});
    for (std::size_t i = 0; i < m.values().size(); ++i)
        EXPECT_NEAR(m.values()[i], 0.5 * (luts[0].values()[i] + luts[2].values()[i]), 1e-6);

    EXPECT_THROW(fuse_weighted(luts, {{1, 0}}), ShapeError);
    std::vector<Lut3d> mixed = {Lut3d(4), Lut3d(5)};
    EXPECT_THROW(fuse_weighted(mixed, {{1, 0}}), ShapeError);
}

TEST(Lut, FuseWeightedIsLinear) {
    std::vector<Lut3d> luts = {random_lut(5, 4), random_lut(5, 5), random_lut(5, 6)};
    const FusionWeights w1{{0.3f, -0.2f, 0.9f}}, w2{{-1.1f, 0.4f, 0.25f}};
    const float a = 0.7f, b = -1.3f;
    FusionWeights mix{{a * w1.w[0] + b * w2.w[0], a * w1.w[1] + b * w2.w[1], a * w1.w[2] + b * w2.w[2]}};
    const auto lhs = fuse_weighted(luts, mix);
    const auto f1 = fuse_weighted(luts, w1), f2 = fuse_weighted(luts, w2);
    for (std::size_t i = 0; i < lhs.values().size(); ++i)
        EXPECT_NEAR(lhs.values()[i], a * f1.values()[i] + b * f2.values()[i], 1e-5);
}

TEST(LutStats, ConstantIdentityAndBernoulli) {
    const auto c = lut_stats(Lut3d(5, 0.3f));
    EXPECT_NEAR(c.mean, 0.3, 1e-7);
    EXPECT_NEAR(c.variance, 0.0, 1e-12);
    EXPECT_EQ(c.histogram[0], 5u * 5 * 5 * 3);

    EXPECT_NEAR(lut_stats(identity_lut(17)).mean, 0.5, 1e-7);

    Lut3d two(2);
    for (std::size_t i = 0; i < two.values().size(); ++i) two.values()[i] = static_cast<float>(i % 2);
    const auto s = lut_stats(two);
    EXPECT_NEAR(s.variance, 0.25, 1e-12);
    EXPECT_EQ(s.histogram[0], 12u);
    EXPECT_EQ(s.histogram[63], 12u);
}

TEST(CubeIo, RoundTrip) {
    const auto lut = random_lut(9, 21);
    const auto back = parse_cube(format_cube(lut, "test"));
    ASSERT_EQ(back.size(), 9);
    for (std::size_t i = 0; i < lut.values().size(); ++i) EXPECT_NEAR(back.values()[i], lut.values()[i], 1e-6);

    const auto path = std::filesystem::temp_directory_path() / "lutfuse_roundtrip.cube";
    write_cube(path, lut);
    const auto disk = read_cube(path);
    for (std::size_t i = 0; i < lut.values().size(); ++i) EXPECT_NEAR(disk.values()[i], lut.values()[i], 1e-6);
    std::filesystem::remove(path);
}

TEST(CubeIo, RedVariesFastestWithSixDecimals) {
    const auto text = format_cube(identity_lut(2));
    EXPECT_NE(text.find("LUT_3D_SIZE 2\n"), std::string::npos);
    EXPECT_NE(text.find("0.000000 0.000000 0.000000\n1.000000 0.000000 0.000000\n0.000000 1.000000 0.000000\n"),
              std::string::npos);
}

TEST(CubeIo, MinimalFile) {
    std::string text = "# comment\nLUT_3D_SIZE 2\n";
    for (int i = 0; i < 8; ++i) text += "0 0 0\n";
    EXPECT_EQ(parse_cube(text).size(), 2);
}

TEST(CubeIo, ShortFileNamesExpectedCount) {
    std::string text = "LUT_3D_SIZE 2\n";
    for (int i = 0; i < 7; ++i) text += "0 0 0\n";
    try {
        parse_cube(text);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("expected 8"), std::string::npos) << e.what();
    }
}

TEST(CubeIo, BadTokenReportsLine) {
    try {
        parse_cube("TITLE \"x\"\nLUT_3D_SIZE 2\n0 0 0\n0 zero 0\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_cube("0 0 0\n"), ParseError);
    EXPECT_THROW(parse_cube("LUT_3D_SIZE 1\n"), ParseError);
}

TEST(CubeIo, RefusesOutOfRangeLut) {
    Lut3d lut(2, 1.5f);
    EXPECT_THROW(write_cube(std::filesystem::temp_directory_path() / "never.cube", lut), ConfigError);
}
