#pragma once

// Finite-difference gradient checking against a double-precision
// reference. For an op f and a fixed random projection r, the scalar
// L(x) = Σ r·f(x) is differentiated twice: once by the tape (float) and
// once by central differences of the reference (double).

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "lutfuse/ops.hpp"
#include "lutfuse/tensor.hpp"

namespace gradcheck {

using lutfuse::ad::Tensor;
using Vec = std::vector<double>;

inline std::vector<float> random_values(std::size_t n, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
    std::mt19937_64 rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = lo + (hi - lo) * static_cast<float>(static_cast<double>(rng() >> 11) * 0x1.0p-53);
    return v;
}

// Values in ±[margin, 1], away from kinks at zero.
inline std::vector<float> random_away_from_zero(std::size_t n, std::uint64_t seed, float margin = 0.05f) {
    auto v = random_values(n, seed, margin, 1.0f);
    auto s = random_values(n, seed ^ 0x9E37u, -1.0f, 1.0f);
    for (std::size_t i = 0; i < n; ++i)
        if (s[i] < 0) v[i] = -v[i];
    return v;
}

inline Tensor random_tensor(lutfuse::ad::Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
    const auto n = static_cast<std::size_t>(lutfuse::ad::numel_of(shape));
    return Tensor::from(std::move(shape), random_values(n, seed, lo, hi));
}

inline Vec to_double(const Tensor& t) { return Vec(t.data().begin(), t.data().end()); }

struct Result {
    double rel_error = 0.0;     // ‖g_tape − g_fd‖ / ‖g_fd‖
    double forward_error = 0.0; // max |f(x) − f_ref(x)|
};

using Op = std::function<Tensor(const std::vector<Tensor>&)>;
using RefOp = std::function<Vec(const std::vector<Vec>&)>;

// Checks d L / d inputs[wrt]. `h` is the central-difference step.
inline Result check(const Op& op, const RefOp& reference, std::vector<Tensor> inputs, std::size_t wrt, double h = 1e-4,
                    std::uint64_t seed = 1234) {
    for (auto& t : inputs) t = t.detach();
    inputs[wrt].set_requires_grad(true);
    Tensor out = op(inputs);
    const auto rv = random_values(static_cast<std::size_t>(out.numel()), seed);
    const Tensor r = Tensor::from(out.shape(), rv);
    lutfuse::ad::backward(lutfuse::ad::sum(lutfuse::ad::mul(out, r)));
    const auto g_tape = inputs[wrt].grad();

    std::vector<Vec> xs;
    for (const auto& t : inputs) xs.push_back(to_double(t));
    Result res;
    {
        const Vec fwd = reference(xs);
        for (std::size_t i = 0; i < fwd.size(); ++i)
            res.forward_error = std::max(res.forward_error, std::fabs(fwd[i] - static_cast<double>(out.data()[i])));
    }
    auto loss = [&] {
        const Vec y = reference(xs);
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(rv[i]) * y[i];
        return s;
    };
    double num = 0, den = 0;
    for (std::size_t i = 0; i < xs[wrt].size(); ++i) {
        const double x0 = xs[wrt][i];
        xs[wrt][i] = x0 + h;
        const double lp = loss();
        xs[wrt][i] = x0 - h;
        const double lm = loss();
        xs[wrt][i] = x0;
        const double g_fd = (lp - lm) / (2 * h);
        num += (g_fd - g_tape[i]) * (g_fd - g_tape[i]);
        den += g_fd * g_fd;
    }
    res.rel_error = std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
    return res;
}

}  // namespace gradcheck
