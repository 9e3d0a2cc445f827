// Central finite-difference checks of every differentiable op against
// double-precision references.

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numeric>

#include "lutfuse/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/reference.hpp"

using namespace lutfuse::ad;
using gradcheck::check;
using gradcheck::random_tensor;
using gradcheck::Vec;

namespace {

constexpr double kTol = 1e-3;

Tensor away_from_zero(Shape s, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(numel_of(s));
    return Tensor::from(std::move(s), gradcheck::random_away_from_zero(n, seed));
}

void expect_grad(const gradcheck::Op& op, const gradcheck::RefOp& rf, const std::vector<Tensor>& in, std::size_t wrt,
                 double h = 1e-4, double fwd_tol = 1e-5) {
    const auto r = check(op, rf, in, wrt, h);
    EXPECT_LE(r.rel_error, kTol) << "input " << wrt;
    EXPECT_LE(r.forward_error, fwd_tol) << "input " << wrt;
}

}  // namespace

TEST(Grad, Elementwise) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto a = random_tensor({3, 4}, seed), b = random_tensor({3, 4}, seed + 100);
        for (std::size_t wrt : {0u, 1u}) {
            expect_grad([](auto& in) { return add(in[0], in[1]); },
                        [](auto& x) { Vec o(x[0].size()); for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[0][i] + x[1][i]; return o; },
                        {a, b}, wrt, 0.5);
            expect_grad([](auto& in) { return sub(in[0], in[1]); },
                        [](auto& x) { Vec o(x[0].size()); for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[0][i] - x[1][i]; return o; },
                        {a, b}, wrt, 0.5);
            expect_grad([](auto& in) { return mul(in[0], in[1]); },
                        [](auto& x) { Vec o(x[0].size()); for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[0][i] * x[1][i]; return o; },
                        {a, b}, wrt, 0.5);
        }
        expect_grad([](auto& in) { return scale(in[0], -2.5f); },
                    [](auto& x) { Vec o(x[0]); for (double& v : o) v *= -2.5; return o; }, {a}, 0, 0.5);
        expect_grad([](auto& in) { return add_scalar(in[0], 0.25f); },
                    [](auto& x) { Vec o(x[0]); for (double& v : o) v += 0.25; return o; }, {a}, 0, 0.5);
        expect_grad([](auto& in) { return abs(in[0]); },
                    [](auto& x) { Vec o(x[0]); for (double& v : o) v = std::fabs(v); return o; },
                    {away_from_zero({3, 4}, seed)}, 0, 1e-3);
    }
}

TEST(Grad, WeightedSum) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::vector<Tensor> in = {random_tensor({3}, seed), random_tensor({2, 3}, seed + 1),
                                  random_tensor({2, 3}, seed + 2), random_tensor({2, 3}, seed + 3)};
        auto op = [](const std::vector<Tensor>& t) { return weighted_sum({t[1], t[2], t[3]}, t[0]); };
        auto rf = [](const std::vector<Vec>& x) {
            Vec o(6, 0.0);
            for (int k = 0; k < 3; ++k)
                for (int i = 0; i < 6; ++i) o[i] += x[0][k] * x[k + 1][i];
            return o;
        };
        for (std::size_t wrt = 0; wrt < 4; ++wrt) expect_grad(op, rf, in, wrt, 0.5);
    }
}

TEST(Grad, Reductions) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto a = random_tensor({4, 5}, seed), b = random_tensor({4, 5}, seed + 7);
        expect_grad([](auto& in) { return sum(in[0]); },
                    [](auto& x) { return Vec{std::accumulate(x[0].begin(), x[0].end(), 0.0)}; }, {a}, 0, 0.5);
        expect_grad([](auto& in) { return mean(in[0]); },
                    [](auto& x) { return Vec{std::accumulate(x[0].begin(), x[0].end(), 0.0) / x[0].size()}; }, {a}, 0,
                    0.5);
        // Ties between a and b have probability zero; keep h small.
        for (std::size_t wrt : {0u, 1u}) {
            expect_grad([](auto& in) { return l1_distance(in[0], in[1]); },
                        [](auto& x) {
                            double s = 0;
                            for (std::size_t i = 0; i < x[0].size(); ++i) s += std::fabs(x[0][i] - x[1][i]);
                            return Vec{s / x[0].size()};
                        },
                        {a, b}, wrt, 1e-4);
        }
    }
}

TEST(Grad, ShapeOps) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto a = random_tensor({2, 3, 4}, seed);
        expect_grad([](auto& in) { return reshape(in[0], {6, 4}); }, [](auto& x) { return x[0]; }, {a}, 0, 0.5);
        expect_grad([](auto& in) { return permute(in[0], {2, 0, 1}); },
                    [](auto& x) {
                        Vec o(24);
                        for (int i = 0; i < 2; ++i)
                            for (int j = 0; j < 3; ++j)
                                for (int k = 0; k < 4; ++k) o[(k * 2 + i) * 3 + j] = x[0][(i * 3 + j) * 4 + k];
                        return o;
                    },
                    {a}, 0, 0.5);
        auto m = random_tensor({3, 5}, seed + 3);
        expect_grad([](auto& in) { return transpose(in[0]); },
                    [](auto& x) {
                        Vec o(15);
                        for (int i = 0; i < 3; ++i)
                            for (int j = 0; j < 5; ++j) o[j * 3 + i] = x[0][i * 5 + j];
                        return o;
                    },
                    {m}, 0, 0.5);
        auto l = random_tensor({3, 2}, seed + 4);
        for (std::size_t wrt : {0u, 1u}) {
            expect_grad([](auto& in) { return concat_columns(in[0], in[1]); },
                        [](auto& x) {
                            Vec o;
                            for (int i = 0; i < 3; ++i) {
                                for (int j = 0; j < 5; ++j) o.push_back(x[0][i * 5 + j]);
                                for (int j = 0; j < 2; ++j) o.push_back(x[1][i * 2 + j]);
                            }
                            return o;
                        },
                        {m, l}, wrt, 0.5);
        }
    }
}

TEST(Grad, MatmulAndLinear) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto a = random_tensor({3, 11}, seed), b = random_tensor({11, 4}, seed + 1);
        for (std::size_t wrt : {0u, 1u})
            expect_grad([](auto& in) { return matmul(in[0], in[1]); },
                        [](auto& x) { return ref::matmul(x[0], x[1], 3, 11, 4); }, {a, b}, wrt, 0.5);
        auto x = random_tensor({5, 13}, seed + 2), w = random_tensor({7, 13}, seed + 3), bias = random_tensor({7}, seed + 4);
        for (std::size_t wrt : {0u, 1u, 2u})
            expect_grad([](auto& in) { return linear(in[0], in[1], in[2]); },
                        [](auto& v) { return ref::linear(v[0], 5, 13, v[1], 7, v[2]); }, {x, w, bias}, wrt, 0.5);
    }
}

struct ConvCase {
    int n, c, h, w, oc, k, stride, pad;
};

TEST(Grad, Conv2d) {
    const ConvCase cases[] = {
        {1, 2, 7, 6, 3, 3, 1, 1}, {2, 3, 8, 8, 2, 3, 2, 1}, {1, 4, 5, 5, 3, 1, 1, 0},
        {1, 2, 9, 9, 2, 3, 2, 0}, {1, 3, 8, 8, 4, 4, 4, 0},
    };
    std::uint64_t seed = 1;
    for (const auto& cc : cases) {
        for (int rep = 0; rep < 2; ++rep, ++seed) {
            auto x = random_tensor({cc.n, cc.c, cc.h, cc.w}, seed);
            auto w = random_tensor({cc.oc, cc.c, cc.k, cc.k}, seed + 50);
            auto b = random_tensor({cc.oc}, seed + 90);
            auto op = [cc](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], cc.stride, cc.pad); };
            auto rf = [cc](const std::vector<Vec>& v) {
                int oh, ow;
                return ref::conv2d(v[0], cc.n, cc.c, cc.h, cc.w, v[1], cc.oc, cc.k, cc.k, v[2], cc.stride, cc.pad, oh, ow);
            };
            for (std::size_t wrt : {0u, 1u, 2u}) expect_grad(op, rf, {x, w, b}, wrt, 0.5);
        }
    }
}

TEST(Grad, Activations) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto a = away_from_zero({4, 6}, seed);
        expect_grad([](auto& in) { return relu(in[0]); },
                    [](auto& x) { Vec o(x[0]); for (double& v : o) v = std::max(v, 0.0); return o; }, {a}, 0, 1e-3);
        expect_grad([](auto& in) { return elu(in[0]); },
                    [](auto& x) { Vec o(x[0]); for (double& v : o) v = ref::elu(v); return o; }, {a}, 0, 1e-4);
        auto s = random_tensor({4, 6}, seed, -3.0f, 3.0f);
        expect_grad([](auto& in) { return softmax(in[0], 1); },
                    [](auto& x) { return ref::softmax_rows(x[0], 6); }, {s}, 0, 1e-4, 1e-6);
        expect_grad([](auto& in) { return activation(in[0], Activation::softmax_lastdim); },
                    [](auto& x) { return ref::softmax_rows(x[0], 6); }, {s}, 0, 1e-4, 1e-6);
        // Softmax over the leading axis of a [K,P] map.
        expect_grad([](auto& in) { return softmax(in[0], 0); },
                    [](auto& x) {
                        Vec t(24);
                        for (int i = 0; i < 4; ++i)
                            for (int j = 0; j < 6; ++j) t[j * 4 + i] = x[0][i * 6 + j];
                        auto sm = ref::softmax_rows(t, 4);
                        Vec o(24);
                        for (int i = 0; i < 4; ++i)
                            for (int j = 0; j < 6; ++j) o[i * 6 + j] = sm[j * 4 + i];
                        return o;
                    },
                    {s}, 0, 1e-4, 1e-6);
    }
}

TEST(Grad, Pooling) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto a = random_tensor({2, 3, 7, 9}, seed);
        expect_grad([](auto& in) { return adaptive_avg_pool2d(in[0], 3, 4); },
                    [](auto& x) { return ref::adaptive_avg_pool2d(x[0], 6, 7, 9, 3, 4); }, {a}, 0, 0.5);
        expect_grad([](auto& in) { return global_avg_pool(in[0]); },
                    [](auto& x) { return ref::adaptive_avg_pool2d(x[0], 6, 7, 9, 1, 1); }, {a}, 0, 0.5);
    }
}

TEST(Grad, ResizeBilinear) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto a = random_tensor({1, 2, 6, 10}, seed);
        expect_grad([](auto& in) { return resize_bilinear(in[0], 3, 4); },
                    [](auto& x) { return ref::resize_bilinear(x[0], 2, 6, 10, 3, 4); }, {a}, 0, 0.5);
        expect_grad([](auto& in) { return resize_bilinear(in[0], 13, 17); },
                    [](auto& x) { return ref::resize_bilinear(x[0], 2, 6, 10, 13, 17); }, {a}, 0, 0.5);
    }
}

TEST(Grad, L2NormalizeRows) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto a = random_tensor({4, 5}, seed);
        expect_grad([](auto& in) { return l2_normalize_rows(in[0]); },
                    [](auto& x) {
                        Vec o(x[0]);
                        for (int r = 0; r < 4; ++r) {
                            double s = 0;
                            for (int j = 0; j < 5; ++j) s += o[r * 5 + j] * o[r * 5 + j];
                            for (int j = 0; j < 5; ++j) o[r * 5 + j] /= std::sqrt(s);
                        }
                        return o;
                    },
                    {a}, 0, 1e-4);
    }
}

TEST(Grad, SampleVolume) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto vol = random_tensor({3, 4, 5, 6}, seed);
        auto coords = random_tensor({20, 3}, seed + 9, -1.0f, 1.0f);
        expect_grad([](auto& in) { return sample_volume(in[0], in[1]); },
                    [](auto& x) { return ref::sample_volume(x[0], 3, 4, 5, 6, x[1]); }, {vol, coords}, 0, 0.5);
    }
}

TEST(Grad, BlendImages) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto w = random_tensor({3, 4, 5}, seed);
        auto im = random_tensor({3, 3, 4, 5}, seed + 1);
        auto rf = [](const std::vector<Vec>& x) {
            Vec o(60, 0.0);
            for (int k = 0; k < 3; ++k)
                for (int c = 0; c < 3; ++c)
                    for (int p = 0; p < 20; ++p) o[c * 20 + p] += x[0][k * 20 + p] * x[1][(k * 3 + c) * 20 + p];
            return o;
        };
        for (std::size_t wrt : {0u, 1u})
            expect_grad([](auto& in) { return blend_images(in[0], in[1]); }, rf, {w, im}, wrt, 0.5);
    }
}

namespace {

Vec lut_ref(const Vec& nodes, const std::vector<std::int32_t>* index, int n, const Vec& img, int p) {
    Vec dense(static_cast<std::size_t>(n) * n * n * 3, 0.0);
    for (std::size_t f = 0; f < dense.size() / 3; ++f) {
        const auto row = index ? (*index)[f] : static_cast<std::int32_t>(f);
        if (row < 0) continue;
        for (int c = 0; c < 3; ++c) dense[f * 3 + c] = nodes[static_cast<std::size_t>(row) * 3 + c];
    }
    Vec o(3 * static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) {
        const auto v = ref::lut_sample(dense, n, {img[i], img[p + i], img[2 * p + i]});
        for (int c = 0; c < 3; ++c) o[c * p + i] = v[c];
    }
    return o;
}

// Trilinear lookup is only piecewise smooth; keep colours at least 1e-3
// away from lattice planes so central differences stay inside one cell.
Tensor off_lattice(Tensor img, int n) {
    for (float& v : img.data()) {
        const float x = v * static_cast<float>(n - 1);
        if (std::fabs(x - std::nearbyint(x)) < 1e-3f * static_cast<float>(n - 1)) v += 2e-3f;
    }
    return img;
}

}  // namespace

TEST(Grad, LutLookupDense) {
    const int n = 5, p = 30;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto nodes = random_tensor({n * n * n, 3}, seed, 0.0f, 1.0f);
        // Some channels fall outside [0,1] to exercise clamping.
        auto img = off_lattice(random_tensor({3, 5, 6}, seed + 3, -0.1f, 1.1f), n);
        auto op = [](const std::vector<Tensor>& in) { return lut_lookup(in[0], nullptr, n, in[1]); };
        auto rf = [](const std::vector<Vec>& x) { return lut_ref(x[0], nullptr, n, x[1], p); };
        expect_grad(op, rf, {nodes, img}, 0, 0.5);
        expect_grad(op, rf, {nodes, img}, 1, 1e-4);
    }
}

TEST(Grad, LutLookupSparse) {
    const int n = 4, p = 12;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto img = off_lattice(random_tensor({3, 3, 4}, seed, 0.01f, 0.99f), n);
        auto index = std::make_shared<std::vector<std::int32_t>>(n * n * n, -1);
        std::int32_t rows = 0;
        for (int i = 0; i < p; ++i) {
            int lo[3];
            for (int a = 0; a < 3; ++a) lo[a] = std::min(static_cast<int>(img.data()[a * p + i] * (n - 1)), n - 2);
            for (int c = 0; c < 8; ++c) {
                const int f = (lo[0] + (c & 1)) + (lo[1] + ((c >> 1) & 1)) * n + (lo[2] + ((c >> 2) & 1)) * n * n;
                if ((*index)[f] < 0) (*index)[f] = rows++;
            }
        }
        auto nodes = random_tensor({rows, 3}, seed + 5);
        std::shared_ptr<const std::vector<std::int32_t>> cidx = index;
        auto op = [cidx](const std::vector<Tensor>& in) { return lut_lookup(in[0], cidx, n, in[1]); };
        auto rf = [cidx](const std::vector<Vec>& x) { return lut_ref(x[0], cidx.get(), n, x[1], p); };
        expect_grad(op, rf, {nodes, img}, 0, 0.5);
        expect_grad(op, rf, {nodes, img}, 1, 1e-4);
    }
}

TEST(Oracle, Conv2dMatchesNaiveLoopOn8x8) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto x = random_tensor({2, 3, 8, 8}, seed);
        auto w = random_tensor({4, 3, 3, 3}, seed + 1);
        auto b = random_tensor({4}, seed + 2);
        for (int stride : {1, 2})
            for (int pad : {0, 1}) {
                auto y = conv2d(x, w, b, stride, pad);
                int oh, ow;
                auto r = ref::conv2d(gradcheck::to_double(x), 2, 3, 8, 8, gradcheck::to_double(w), 4, 3, 3,
                                     gradcheck::to_double(b), stride, pad, oh, ow);
                ASSERT_EQ(y.shape(), (Shape{2, 4, oh, ow}));
                for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(y.data()[i], r[i], 1e-5);
            }
    }
}
