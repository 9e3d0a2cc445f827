#include <gtest/gtest.h>

#include <cmath>

#include "lutfuse/checkpoint.hpp"
#include "lutfuse/error.hpp"
#include "lutfuse/init.hpp"
#include "lutfuse/ops.hpp"
#include "lutfuse/optim.hpp"

using namespace lutfuse::ad;

TEST(Tensor, FactoriesKeepShapeAndData) {
    auto z = Tensor::zeros({2, 3});
    EXPECT_EQ(z.numel(), 6);
    EXPECT_EQ(z.shape(), (Shape{2, 3}));
    EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), lutfuse::ShapeError);
    EXPECT_THROW(Tensor::zeros({2, 0}), lutfuse::ShapeError);
}

TEST(Backward, SumGivesOnes) {
    auto x = Tensor::from({4}, {1, 2, 3, 4}, true);
    backward(sum(x));
    for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(Backward, SquareGivesTwoX) {
    auto x = Tensor::from({2}, {1, 2}, true);
    backward(sum(mul(x, x)));
    EXPECT_FLOAT_EQ(x.grad()[0], 2.0f);
    EXPECT_FLOAT_EQ(x.grad()[1], 4.0f);
}

TEST(Backward, RepeatedCallsAccumulate) {
    auto x = Tensor::from({3}, {1, -2, 3}, true);
    auto loss = sum(mul(x, x));
    backward(loss);
    backward(loss);
    EXPECT_FLOAT_EQ(x.grad()[0], 4.0f);
    EXPECT_FLOAT_EQ(x.grad()[1], -8.0f);
    x.zero_grad();
    backward(loss);
    EXPECT_FLOAT_EQ(x.grad()[2], 6.0f);
}

TEST(Backward, SharedSubexpressionAccumulatesOnce) {
    auto x = Tensor::from({1}, {3}, true);
    auto y = mul(x, x);
    backward(sum(add(y, y)));  // d(2x²)/dx = 4x
    EXPECT_FLOAT_EQ(x.grad()[0], 12.0f);
}

TEST(Backward, RejectsNonScalarAndDetached) {
    auto x = Tensor::from({2}, {1, 2}, true);
    EXPECT_THROW(backward(mul(x, x)), lutfuse::ShapeError);
    EXPECT_THROW(backward(sum(x).detach()), lutfuse::Error);
    auto c = Tensor::from({2}, {1, 2});
    EXPECT_THROW(backward(sum(c)), lutfuse::Error);
}

TEST(Backward, NoGradGuardSkipsRecording) {
    auto x = Tensor::from({2}, {1, 2}, true);
    Tensor y;
    {
        NoGradGuard guard;
        y = sum(mul(x, x));
    }
    EXPECT_TRUE(y.is_leaf());
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(grad_enabled());
}

TEST(Ops, ReluAndSoftmaxExamples) {
    auto r = relu(Tensor::from({3}, {-1, 0, 2}));
    EXPECT_EQ(std::vector<float>(r.data().begin(), r.data().end()), (std::vector<float>{0, 0, 2}));
    auto s = softmax(Tensor::zeros({3}), 0);
    for (float v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
}

TEST(Ops, MeanOfOneTwoThree) { EXPECT_FLOAT_EQ(mean(Tensor::from({3}, {1, 2, 3})).item(), 2.0f); }

TEST(Ops, MeanGradientIsOneOverN) {
    auto x = Tensor::zeros({5}, true);
    backward(mean(x));
    for (float g : x.grad()) EXPECT_FLOAT_EQ(g, 0.2f);
}

TEST(Ops, LinearIdentityAndBias) {
    auto x = Tensor::from({2, 2}, {1, 2, 3, 4});
    auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    auto y = linear(x, eye, Tensor::zeros({2}));
    EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()), (std::vector<float>{1, 2, 3, 4}));
    auto z = linear(x, Tensor::zeros({3, 2}), Tensor::from({3}, {5, 6, 7}));
    EXPECT_EQ(std::vector<float>(z.data().begin(), z.data().end()), (std::vector<float>{5, 6, 7, 5, 6, 7}));
    EXPECT_THROW(linear(x, Tensor::zeros({3, 3}), Tensor::zeros({3})), lutfuse::ShapeError);
}

TEST(Ops, ConvIdentityKernel) {
    auto x = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto y = conv2d(x, Tensor::from({1, 1, 1, 1}, {1}), Tensor::zeros({1}), 1, 0);
    EXPECT_EQ(y.shape(), x.shape());
    for (int i = 0; i < 9; ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Ops, ConvConstantInputAllOnes) {
    const float c = 0.37f;
    auto x = Tensor::full({1, 1, 5, 5}, c);
    auto y = conv2d(x, Tensor::full({1, 1, 3, 3}, 1.0f), Tensor::zeros({1}), 1, 0);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
    for (float v : y.data()) EXPECT_NEAR(v, 9 * c, 1e-6);
}

TEST(Ops, ConvChannelMismatchIsDescriptive) {
    auto x = Tensor::zeros({1, 2, 4, 4});
    try {
        conv2d(x, Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), 1, 1);
        FAIL();
    } catch (const lutfuse::ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
    }
}

TEST(Ops, AdaptivePoolToOneIsMean) {
    auto x = Tensor::from({1, 2, 2, 3}, {1, 2, 3, 4, 5, 6, 0, 0, 0, 0, 0, 6});
    auto y = adaptive_avg_pool2d(x, 1, 1);
    EXPECT_FLOAT_EQ(y.data()[0], 3.5f);
    EXPECT_FLOAT_EQ(y.data()[1], 1.0f);
    EXPECT_THROW(adaptive_avg_pool2d(x, 3, 3), lutfuse::ShapeError);
}

TEST(Ops, SoftmaxSumsToOneForExtremeInputs) {
    auto x = Tensor::from({3, 4}, {1000, -1000, 0, 5, 1e-3f, 2e-3f, 3e-3f, 4e-3f, -50, -60, -70, 88});
    auto y = softmax(x, 1);
    for (int r = 0; r < 3; ++r) {
        double s = 0;
        for (int j = 0; j < 4; ++j) s += y.data()[r * 4 + j];
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(AdamW, ZeroGradNoDecayLeavesParamsUnchanged) {
    auto p = Tensor::from({2}, {0.5f, -1.5f}, true);
    AdamW opt({{"p", p}}, {.lr = 0.1f, .weight_decay = 0.0f});
    opt.zero_grad();
    opt.step();
    EXPECT_EQ(p.data()[0], 0.5f);
    EXPECT_EQ(p.data()[1], -1.5f);
    EXPECT_EQ(opt.state().step, 1);
}

TEST(AdamW, QuadraticStepMatchesScalarRecurrence) {
    auto p = Tensor::from({1}, {1.0f}, true);
    AdamW opt({{"theta", p}}, {.lr = 0.1f, .weight_decay = 0.0f});
    opt.zero_grad();
    backward(scale(mul(p, p), 0.5f));
    opt.step();
    // One bias-corrected step: m̂ = g, v̂ = g², θ -= lr·g/(|g|+ε).
    const double g = 1.0, expected = 1.0 - 0.1 * g / (std::sqrt(g * g) + 1e-8);
    EXPECT_NEAR(p.data()[0], expected, 1e-6);
    EXPECT_LT(std::fabs(p.data()[0]), 1.0f);
}

TEST(AdamW, DecoupledDecayShrinksByFactor) {
    auto p = Tensor::from({1}, {2.0f}, true);
    AdamW opt({{"p", p}}, {.lr = 0.1f, .weight_decay = 0.5f});
    opt.zero_grad();
    opt.step();
    EXPECT_NEAR(p.data()[0], 2.0 * (1 - 0.1 * 0.5), 1e-6);
}

TEST(AdamW, MissingGradNamesParameter) {
    auto p = Tensor::from({1}, {2.0f}, true);
    AdamW opt({{"student/encoder/conv0/weight", p}}, {});
    try {
        opt.step();
        FAIL();
    } catch (const lutfuse::Error& e) {
        EXPECT_NE(std::string(e.what()).find("student/encoder/conv0/weight"), std::string::npos);
    }
}

TEST(AdamW, ClipGradNormScalesToBound) {
    auto p = Tensor::from({2}, {0, 0}, true);
    p.zero_grad();
    p.mutable_grad()[0] = 3;
    p.mutable_grad()[1] = 4;
    const double before = clip_grad_norm({{"p", p}}, 1.0);
    EXPECT_DOUBLE_EQ(before, 5.0);
    EXPECT_NEAR(p.grad()[0], 0.6, 1e-6);
    EXPECT_NEAR(p.grad()[1], 0.8, 1e-6);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
    Checkpoint c;
    c.put("a/w", Tensor::from({2, 2}, {1, 2, 3, 4}));
    c.put("b", Tensor::from({1}, {-0.0f}));
    c.metadata() = R"({"k":1})";
    const auto bytes = c.serialize();
    const auto back = Checkpoint::deserialize(bytes);
    EXPECT_EQ(back.serialize(), bytes);
    EXPECT_EQ(back.at("a/w").values, (std::vector<float>{1, 2, 3, 4}));
    EXPECT_EQ(back.metadata(), R"({"k":1})");
}

TEST(Checkpoint, HeaderLayout) {
    Checkpoint c;
    c.put("x", Tensor::from({1}, {1.0f}));
    const auto b = c.serialize();
    EXPECT_EQ(b.substr(0, 4), "LUTF");
    EXPECT_EQ(static_cast<unsigned char>(b[4]), kCheckpointVersion);
    EXPECT_EQ(static_cast<unsigned char>(b[8]), 1);  // entry count
}

TEST(Checkpoint, CorruptionIsReported) {
    Checkpoint c;
    c.put("x", Tensor::from({3}, {1, 2, 3}));
    auto b = c.serialize();
    EXPECT_THROW(Checkpoint::deserialize(b.substr(0, b.size() - 3)), lutfuse::ParseError);
    b[0] = 'X';
    EXPECT_THROW(Checkpoint::deserialize(b), lutfuse::ParseError);
}

TEST(Checkpoint, OptimizerStateRoundTrips) {
    auto p = Tensor::from({2}, {1, 2}, true);
    AdamW opt({{"p", p}}, {.lr = 0.01f});
    opt.zero_grad();
    backward(sum(mul(p, p)));
    opt.step();
    Checkpoint c;
    opt.save_to(c);
    EXPECT_TRUE(c.contains("opt/step"));
    EXPECT_TRUE(c.contains("opt/m/p"));
    EXPECT_TRUE(c.contains("opt/v/p"));
    AdamW other({{"p", p}}, {.lr = 0.01f});
    other.load_from(c);
    EXPECT_EQ(other.state().step, 1);
    EXPECT_EQ(other.state().m, opt.state().m);
}

TEST(Init, KaimingWithinBoundAndSeeded) {
    auto a = Tensor::zeros({16, 9});
    auto b = Tensor::zeros({16, 9});
    Rng r1(5), r2(5);
    kaiming_uniform(a, 9, r1);
    kaiming_uniform(b, 9, r2);
    const float bound = std::sqrt(6.0f / 9.0f);
    for (std::size_t i = 0; i < 144; ++i) {
        EXPECT_LE(std::fabs(a.data()[i]), bound);
        EXPECT_EQ(a.data()[i], b.data()[i]);
    }
}
