#include "lutfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gemm.hpp"
#include "lutfuse/detail/lattice.hpp"
#include "lutfuse/error.hpp"

namespace lutfuse::ad {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;
using detail::axpy;
using detail::gemm_nn;
using detail::gemm_nt;
using detail::gemm_tn;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
}

void require_rank(const Tensor& a, int rank, const char* op, const char* what) {
    if (a.rank() != rank) {
        throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_to_string(a.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<float> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    const auto n = out.size();
    return make_result(a.shape(), std::move(out), {a, b},
                       [n](const float* g, std::span<float* const> gin) {
                           for (int s = 0; s < 2; ++s)
                               if (gin[s])
                                   for (std::size_t i = 0; i < n; ++i) gin[s][i] += g[i];
                       },
                       "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<float> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    const auto n = out.size();
    return make_result(a.shape(), std::move(out), {a, b},
                       [n](const float* g, std::span<float* const> gin) {
                           if (gin[0])
                               for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[i];
                           if (gin[1])
                               for (std::size_t i = 0; i < n; ++i) gin[1][i] -= g[i];
                       },
                       "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<float> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result(a.shape(), std::move(out), {a, b},
                       [ai, bi](const float* g, std::span<float* const> gin) {
                           const std::size_t n = ai->data.size();
                           if (gin[0])
                               for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[i] * bi->data[i];
                           if (gin[1])
                               for (std::size_t i = 0; i < n; ++i) gin[1][i] += g[i] * ai->data[i];
                       },
                       "mul");
}

Tensor scale(const Tensor& a, float s) {
    std::vector<float> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= s;
    const auto n = out.size();
    return make_result(a.shape(), std::move(out), {a},
                       [n, s](const float* g, std::span<float* const> gin) {
                           for (std::size_t i = 0; i < n; ++i) gin[0][i] += s * g[i];
                       },
                       "scale");
}

Tensor add_scalar(const Tensor& a, float s) {
    std::vector<float> out(a.data().begin(), a.data().end());
    for (auto& v : out) v += s;
    const auto n = out.size();
    return make_result(a.shape(), std::move(out), {a},
                       [n](const float* g, std::span<float* const> gin) {
                           for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[i];
                       },
                       "add_scalar");
}

Tensor abs(const Tensor& a) {
    std::vector<float> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = std::fabs(v);
    ImplPtr ai = a.impl();
    return make_result(a.shape(), std::move(out), {a},
                       [ai](const float* g, std::span<float* const> gin) {
                           const auto& x = ai->data;
                           for (std::size_t i = 0; i < x.size(); ++i) {
                               if (x[i] > 0.0f)
                                   gin[0][i] += g[i];
                               else if (x[i] < 0.0f)
                                   gin[0][i] -= g[i];
                           }
                       },
                       "abs");
}

Tensor weighted_sum(const std::vector<Tensor>& xs, const Tensor& w) {
    if (xs.empty()) throw ShapeError("weighted_sum: no inputs");
    if (w.numel() != static_cast<std::int64_t>(xs.size())) {
        throw ShapeError("weighted_sum: " + std::to_string(xs.size()) + " inputs but " + std::to_string(w.numel()) +
                         " weights");
    }
    for (const auto& x : xs) require_same_shape(xs.front(), x, "weighted_sum");
    const std::size_t n = static_cast<std::size_t>(xs.front().numel());
    std::vector<float> out(n, 0.0f);
    auto wd = w.data();
    for (std::size_t k = 0; k < xs.size(); ++k) axpy(wd[k], xs[k].data().data(), out.data(), static_cast<std::int64_t>(n));

    std::vector<Tensor> inputs(xs);
    inputs.push_back(w);
    std::vector<ImplPtr> impls;
    for (const auto& t : inputs) impls.push_back(t.impl());
    return make_result(xs.front().shape(), std::move(out), inputs,
                       [impls, n](const float* g, std::span<float* const> gin) {
                           const std::size_t k_count = impls.size() - 1;
                           const auto& wv = impls.back()->data;
                           for (std::size_t k = 0; k < k_count; ++k) {
                               if (gin[k]) axpy(wv[k], g, gin[k], static_cast<std::int64_t>(n));
                               if (gin[k_count]) {
                                   double acc = 0.0;
                                   const auto& x = impls[k]->data;
                                   for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(g[i]) * x[i];
                                   gin[k_count][k] += static_cast<float>(acc);
                               }
                           }
                       },
                       "weighted_sum");
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    const auto n = static_cast<std::size_t>(a.numel());
    return make_result({1}, {static_cast<float>(acc)}, {a},
                       [n](const float* g, std::span<float* const> gin) {
                           for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[0];
                       },
                       "sum");
}

Tensor mean(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    const auto n = static_cast<std::size_t>(a.numel());
    return make_result({1}, {static_cast<float>(acc / static_cast<double>(n))}, {a},
                       [n](const float* g, std::span<float* const> gin) {
                           const float s = g[0] / static_cast<float>(n);
                           for (std::size_t i = 0; i < n; ++i) gin[0][i] += s;
                       },
                       "mean");
}

Tensor l1_distance(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "l1_distance");
    auto ad = a.data();
    auto bd = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < ad.size(); ++i) acc += std::fabs(static_cast<double>(ad[i]) - bd[i]);
    const auto n = ad.size();
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result({1}, {static_cast<float>(acc / static_cast<double>(n))}, {a, b},
                       [ai, bi, n](const float* g, std::span<float* const> gin) {
                           const float s = g[0] / static_cast<float>(n);
                           for (std::size_t i = 0; i < n; ++i) {
                               const float d = ai->data[i] - bi->data[i];
                               const float sg = d > 0.0f ? s : (d < 0.0f ? -s : 0.0f);
                               if (gin[0]) gin[0][i] += sg;
                               if (gin[1]) gin[1][i] -= sg;
                           }
                       },
                       "l1_distance");
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel_of(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
    }
    std::vector<float> out(a.data().begin(), a.data().end());
    const auto n = out.size();
    return make_result(std::move(shape), std::move(out), {a},
                       [n](const float* g, std::span<float* const> gin) {
                           for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[i];
                       },
                       "reshape");
}

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
    const int r = a.rank();
    if (static_cast<int>(axes.size()) != r) throw ShapeError("permute: axis count does not match rank");
    std::vector<int> seen(static_cast<std::size_t>(r), 0);
    for (int ax : axes) {
        if (ax < 0 || ax >= r || seen[static_cast<std::size_t>(ax)]++) throw ShapeError("permute: invalid axis list");
    }
    const Shape& in_shape = a.shape();
    Shape out_shape(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = in_shape[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];

    std::vector<std::int64_t> in_strides(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i) in_strides[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(i + 1)] * in_shape[static_cast<std::size_t>(i + 1)];
    // For each output position, the input offset.
    const auto n = static_cast<std::size_t>(a.numel());
    auto source = std::make_shared<std::vector<std::int64_t>>(n);
    std::vector<std::int64_t> counter(static_cast<std::size_t>(r), 0);
    for (std::size_t o = 0; o < n; ++o) {
        std::int64_t off = 0;
        for (int i = 0; i < r; ++i) off += counter[static_cast<std::size_t>(i)] * in_strides[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
        (*source)[o] = off;
        for (int i = r - 1; i >= 0; --i) {
            if (++counter[static_cast<std::size_t>(i)] < out_shape[static_cast<std::size_t>(i)]) break;
            counter[static_cast<std::size_t>(i)] = 0;
        }
    }
    std::vector<float> out(n);
    auto ad = a.data();
    for (std::size_t o = 0; o < n; ++o) out[o] = ad[static_cast<std::size_t>((*source)[o])];
    return make_result(std::move(out_shape), std::move(out), {a},
                       [source](const float* g, std::span<float* const> gin) {
                           for (std::size_t o = 0; o < source->size(); ++o) gin[0][(*source)[o]] += g[o];
                       },
                       "permute");
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose", "input");
    return permute(a, {1, 0});
}

Tensor concat_columns(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "concat_columns", "a");
    require_rank(b, 2, "concat_columns", "b");
    if (a.dim(0) != b.dim(0)) throw ShapeError("concat_columns: row counts differ");
    const std::int64_t rows = a.dim(0), ca = a.dim(1), cb = b.dim(1), cw = ca + cb;
    std::vector<float> out(static_cast<std::size_t>(rows * cw));
    auto ad = a.data();
    auto bd = b.data();
    for (std::int64_t i = 0; i < rows; ++i) {
        std::copy_n(ad.data() + i * ca, ca, out.data() + i * cw);
        std::copy_n(bd.data() + i * cb, cb, out.data() + i * cw + ca);
    }
    return make_result({rows, cw}, std::move(out), {a, b},
                       [rows, ca, cb, cw](const float* g, std::span<float* const> gin) {
                           for (std::int64_t i = 0; i < rows; ++i) {
                               if (gin[0])
                                   for (std::int64_t j = 0; j < ca; ++j) gin[0][i * ca + j] += g[i * cw + j];
                               if (gin[1])
                                   for (std::int64_t j = 0; j < cb; ++j) gin[1][i * cb + j] += g[i * cw + ca + j];
                           }
                       },
                       "concat_columns");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul", "a");
    require_rank(b, 2, "matmul", "b");
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dimensions differ " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
    }
    std::vector<float> out(static_cast<std::size_t>(m * n), 0.0f);
    gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result({m, n}, std::move(out), {a, b},
                       [ai, bi, m, n, k](const float* g, std::span<float* const> gin) {
                           if (gin[0]) gemm_nt(m, k, n, g, bi->data.data(), gin[0]);
                           if (gin[1]) gemm_tn(k, n, m, ai->data.data(), g, gin[1]);
                       },
                       "matmul");
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require_rank(input, 2, "linear", "input");
    require_rank(weight, 2, "linear", "weight");
    const std::int64_t rows = input.dim(0), f = input.dim(1), g_out = weight.dim(0);
    if (weight.dim(1) != f) {
        throw ShapeError("linear: input has " + std::to_string(f) + " features but weight expects " +
                         std::to_string(weight.dim(1)));
    }
    if (bias.numel() != g_out) throw ShapeError("linear: bias length does not match output features");

    std::vector<float> wt(static_cast<std::size_t>(f * g_out));
    auto wd = weight.data();
    for (std::int64_t i = 0; i < g_out; ++i)
        for (std::int64_t j = 0; j < f; ++j) wt[static_cast<std::size_t>(j * g_out + i)] = wd[static_cast<std::size_t>(i * f + j)];
    std::vector<float> out(static_cast<std::size_t>(rows * g_out));
    auto bd = bias.data();
    for (std::int64_t i = 0; i < rows; ++i) std::copy(bd.begin(), bd.end(), out.begin() + i * g_out);
    gemm_nn(rows, g_out, f, input.data().data(), wt.data(), out.data());

    ImplPtr xi = input.impl(), wi = weight.impl();
    return make_result({rows, g_out}, std::move(out), {input, weight, bias},
                       [xi, wi, rows, f, g_out](const float* g, std::span<float* const> gin) {
                           if (gin[0]) gemm_nn(rows, f, g_out, g, wi->data.data(), gin[0]);
                           if (gin[1]) gemm_tn(g_out, f, rows, g, xi->data.data(), gin[1]);
                           if (gin[2])
                               for (std::int64_t i = 0; i < rows; ++i) axpy(1.0f, g + i * g_out, gin[2], g_out);
                       },
                       "linear");
}

namespace {

struct ConvGeometry {
    std::int64_t n, c, h, w, oc, kh, kw, oh, ow;
    int stride, pad;
    std::int64_t col_rows() const { return c * kh * kw; }
    std::int64_t col_cols() const { return oh * ow; }
    bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const ConvGeometry& g, const float* img, float* col) {
    for (std::int64_t ch = 0; ch < g.c; ++ch) {
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                float* row = col + ((ch * g.kh + ky) * g.kw + kx) * g.oh * g.ow;
                for (std::int64_t oy = 0; oy < g.oh; ++oy) {
                    const std::int64_t iy = oy * g.stride - g.pad + ky;
                    float* dst = row + oy * g.ow;
                    if (iy < 0 || iy >= g.h) {
                        std::fill_n(dst, g.ow, 0.0f);
                        continue;
                    }
                    const float* src = img + (ch * g.h + iy) * g.w;
                    for (std::int64_t ox = 0; ox < g.ow; ++ox) {
                        const std::int64_t ix = ox * g.stride - g.pad + kx;
                        dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im(const ConvGeometry& g, const float* col, float* img) {
    for (std::int64_t ch = 0; ch < g.c; ++ch) {
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                const float* row = col + ((ch * g.kh + ky) * g.kw + kx) * g.oh * g.ow;
                for (std::int64_t oy = 0; oy < g.oh; ++oy) {
                    const std::int64_t iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.h) continue;
                    float* dst = img + (ch * g.h + iy) * g.w;
                    const float* src = row + oy * g.ow;
                    for (std::int64_t ox = 0; ox < g.ow; ++ox) {
                        const std::int64_t ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
    require_rank(input, 4, "conv2d", "input");
    require_rank(weight, 4, "conv2d", "weight");
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
    ConvGeometry g{};
    g.n = input.dim(0);
    g.c = input.dim(1);
    g.h = input.dim(2);
    g.w = input.dim(3);
    g.oc = weight.dim(0);
    g.kh = weight.dim(2);
    g.kw = weight.dim(3);
    g.stride = stride;
    g.pad = padding;
    if (weight.dim(1) != g.c) {
        throw ShapeError("conv2d: input has " + std::to_string(g.c) + " channels but weight expects " +
                         std::to_string(weight.dim(1)));
    }
    if (bias.numel() != g.oc) throw ShapeError("conv2d: bias length does not match output channels");
    if (g.h + 2 * padding < g.kh || g.w + 2 * padding < g.kw) {
        throw ShapeError("conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                         " larger than padded input " + shape_to_string(input.shape()));
    }
    g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
    g.ow = (g.w + 2 * padding - g.kw) / stride + 1;

    const std::int64_t in_plane = g.c * g.h * g.w;
    const std::int64_t out_plane = g.oc * g.oh * g.ow;
    const std::int64_t k = g.col_rows(), p = g.col_cols();
    std::vector<float> out(static_cast<std::size_t>(g.n * out_plane));
    std::vector<float> col(g.pointwise() ? 0 : static_cast<std::size_t>(k * p));
    auto bd = bias.data();
    for (std::int64_t b = 0; b < g.n; ++b) {
        const float* img = input.data().data() + b * in_plane;
        const float* cols = img;
        if (!g.pointwise()) {
            im2col(g, img, col.data());
            cols = col.data();
        }
        float* o = out.data() + b * out_plane;
        for (std::int64_t c = 0; c < g.oc; ++c) std::fill_n(o + c * p, p, bd[static_cast<std::size_t>(c)]);
        gemm_nn(g.oc, p, k, weight.data().data(), cols, o);
    }

    ImplPtr xi = input.impl(), wi = weight.impl();
    return make_result({g.n, g.oc, g.oh, g.ow}, std::move(out), {input, weight, bias},
                       [xi, wi, g, in_plane, out_plane, k, p](const float* gout, std::span<float* const> gin) {
                           std::vector<float> col(g.pointwise() ? 0 : static_cast<std::size_t>(k * p));
                           std::vector<float> dcol;
                           for (std::int64_t b = 0; b < g.n; ++b) {
                               const float* go = gout + b * out_plane;
                               const float* img = xi->data.data() + b * in_plane;
                               if (gin[1]) {
                                   const float* cols = img;
                                   if (!g.pointwise()) {
                                       im2col(g, img, col.data());
                                       cols = col.data();
                                   }
                                   gemm_nt(g.oc, k, p, go, cols, gin[1]);
                               }
                               if (gin[2]) {
                                   for (std::int64_t c = 0; c < g.oc; ++c) {
                                       double acc = 0.0;
                                       for (std::int64_t i = 0; i < p; ++i) acc += go[c * p + i];
                                       gin[2][c] += static_cast<float>(acc);
                                   }
                               }
                               if (gin[0]) {
                                   float* gi = gin[0] + b * in_plane;
                                   if (g.pointwise()) {
                                       gemm_tn(k, p, g.oc, wi->data.data(), go, gi);
                                   } else {
                                       dcol.assign(static_cast<std::size_t>(k * p), 0.0f);
                                       gemm_tn(k, p, g.oc, wi->data.data(), go, dcol.data());
                                       col2im(g, dcol.data(), gi);
                                   }
                               }
                           }
                       },
                       "conv2d");
}

Tensor relu(const Tensor& a) {
    std::vector<float> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = v > 0.0f ? v : 0.0f;
    ImplPtr ai = a.impl();
    return make_result(a.shape(), std::move(out), {a},
                       [ai](const float* g, std::span<float* const> gin) {
                           const auto& x = ai->data;
                           for (std::size_t i = 0; i < x.size(); ++i)
                               if (x[i] > 0.0f) gin[0][i] += g[i];
                       },
                       "relu");
}

Tensor elu(const Tensor& a, float alpha) {
    std::vector<float> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = v > 0.0f ? v : alpha * std::expm1(v);
    ImplPtr ai = a.impl();
    return make_result(a.shape(), std::move(out), {a},
                       [ai, alpha](const float* g, std::span<float* const> gin) {
                           const auto& x = ai->data;
                           for (std::size_t i = 0; i < x.size(); ++i)
                               gin[0][i] += g[i] * (x[i] > 0.0f ? 1.0f : alpha * std::exp(x[i]));
                       },
                       "elu");
}

Tensor softmax(const Tensor& a, int axis) {
    const int r = a.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("softmax: axis out of range");
    std::int64_t outer = 1, inner = 1;
    const std::int64_t len = a.dim(axis);
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);
    for (int i = axis + 1; i < r; ++i) inner *= a.dim(i);

    std::vector<float> out(static_cast<std::size_t>(a.numel()));
    auto x = a.data();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * len * inner + in;
            float mx = x[static_cast<std::size_t>(base)];
            for (std::int64_t j = 1; j < len; ++j) mx = std::max(mx, x[static_cast<std::size_t>(base + j * inner)]);
            double total = 0.0;
            for (std::int64_t j = 0; j < len; ++j) {
                const float e = std::exp(x[static_cast<std::size_t>(base + j * inner)] - mx);
                out[static_cast<std::size_t>(base + j * inner)] = e;
                total += e;
            }
            const double inv = 1.0 / total;
            for (std::int64_t j = 0; j < len; ++j) {
                auto& v = out[static_cast<std::size_t>(base + j * inner)];
                v = static_cast<float>(v * inv);
            }
        }
    }
    auto y = std::make_shared<std::vector<float>>(out);
    return make_result(a.shape(), std::move(out), {a},
                       [y, outer, inner, len](const float* g, std::span<float* const> gin) {
                           for (std::int64_t o = 0; o < outer; ++o) {
                               for (std::int64_t in = 0; in < inner; ++in) {
                                   const std::int64_t base = o * len * inner + in;
                                   double dotv = 0.0;
                                   for (std::int64_t j = 0; j < len; ++j) {
                                       const auto idx = static_cast<std::size_t>(base + j * inner);
                                       dotv += static_cast<double>(g[idx]) * (*y)[idx];
                                   }
                                   for (std::int64_t j = 0; j < len; ++j) {
                                       const auto idx = static_cast<std::size_t>(base + j * inner);
                                       gin[0][idx] += (*y)[idx] * static_cast<float>(g[idx] - dotv);
                                   }
                               }
                           }
                       },
                       "softmax");
}

Tensor activation(const Tensor& a, Activation kind) {
    switch (kind) {
        case Activation::relu: return relu(a);
        case Activation::elu: return elu(a, 1.0f);
        case Activation::softmax_lastdim: return softmax(a, a.rank() - 1);
    }
    throw ConfigError("unknown activation");
}

namespace {

struct PoolBin {
    std::int64_t lo, hi;
};

std::vector<PoolBin> pool_bins(std::int64_t in, std::int64_t out) {
    std::vector<PoolBin> bins(static_cast<std::size_t>(out));
    for (std::int64_t i = 0; i < out; ++i) {
        bins[static_cast<std::size_t>(i)].lo = (i * in) / out;
        bins[static_cast<std::size_t>(i)].hi = ((i + 1) * in + out - 1) / out;
    }
    return bins;
}

}  // namespace

Tensor adaptive_avg_pool2d(const Tensor& a, int out_h, int out_w) {
    require_rank(a, 4, "adaptive_avg_pool2d", "input");
    const std::int64_t planes = a.dim(0) * a.dim(1), h = a.dim(2), w = a.dim(3);
    if (out_h < 1 || out_w < 1 || out_h > h || out_w > w) {
        throw ShapeError("adaptive_avg_pool2d: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                         " larger than input " + std::to_string(h) + "x" + std::to_string(w));
    }
    auto by = pool_bins(h, out_h);
    auto bx = pool_bins(w, out_w);
    std::vector<float> out(static_cast<std::size_t>(planes * out_h * out_w));
    auto x = a.data();
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                const auto& ry = by[static_cast<std::size_t>(oy)];
                const auto& rx = bx[static_cast<std::size_t>(ox)];
                double acc = 0.0;
                for (auto y = ry.lo; y < ry.hi; ++y)
                    for (auto xx = rx.lo; xx < rx.hi; ++xx) acc += x[static_cast<std::size_t>((pl * h + y) * w + xx)];
                out[static_cast<std::size_t>((pl * out_h + oy) * out_w + ox)] =
                    static_cast<float>(acc / static_cast<double>((ry.hi - ry.lo) * (rx.hi - rx.lo)));
            }
        }
    }
    return make_result({a.dim(0), a.dim(1), out_h, out_w}, std::move(out), {a},
                       [by, bx, planes, h, w, out_h, out_w](const float* g, std::span<float* const> gin) {
                           for (std::int64_t pl = 0; pl < planes; ++pl) {
                               for (int oy = 0; oy < out_h; ++oy) {
                                   for (int ox = 0; ox < out_w; ++ox) {
                                       const auto& ry = by[static_cast<std::size_t>(oy)];
                                       const auto& rx = bx[static_cast<std::size_t>(ox)];
                                       const float s = g[(pl * out_h + oy) * out_w + ox] /
                                                       static_cast<float>((ry.hi - ry.lo) * (rx.hi - rx.lo));
                                       for (auto y = ry.lo; y < ry.hi; ++y)
                                           for (auto xx = rx.lo; xx < rx.hi; ++xx) gin[0][(pl * h + y) * w + xx] += s;
                                   }
                               }
                           }
                       },
                       "adaptive_avg_pool2d");
}

Tensor global_avg_pool(const Tensor& a) {
    require_rank(a, 4, "global_avg_pool", "input");
    return reshape(adaptive_avg_pool2d(a, 1, 1), {a.dim(0), a.dim(1)});
}

namespace {

struct LinearTap {
    std::int64_t i0, i1;
    float t;
};

std::vector<LinearTap> bilinear_taps(std::int64_t in, std::int64_t out) {
    std::vector<LinearTap> taps(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        auto i0 = static_cast<std::int64_t>(src);
        if (i0 > in - 1) i0 = in - 1;
        const std::int64_t i1 = std::min(i0 + 1, in - 1);
        taps[static_cast<std::size_t>(o)] = {i0, i1, static_cast<float>(src - static_cast<double>(i0))};
    }
    return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& a, int out_h, int out_w) {
    require_rank(a, 4, "resize_bilinear", "input");
    if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: target size must be positive");
    const std::int64_t planes = a.dim(0) * a.dim(1), h = a.dim(2), w = a.dim(3);
    auto ty = bilinear_taps(h, out_h);
    auto tx = bilinear_taps(w, out_w);
    std::vector<float> out(static_cast<std::size_t>(planes * out_h * out_w));
    auto x = a.data();
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        const float* src = x.data() + pl * h * w;
        float* dst = out.data() + pl * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const auto& vy = ty[static_cast<std::size_t>(oy)];
            const float* r0 = src + vy.i0 * w;
            const float* r1 = src + vy.i1 * w;
            for (int ox = 0; ox < out_w; ++ox) {
                const auto& vx = tx[static_cast<std::size_t>(ox)];
                const float top = (1.0f - vx.t) * r0[vx.i0] + vx.t * r0[vx.i1];
                const float bot = (1.0f - vx.t) * r1[vx.i0] + vx.t * r1[vx.i1];
                dst[oy * out_w + ox] = (1.0f - vy.t) * top + vy.t * bot;
            }
        }
    }
    return make_result({a.dim(0), a.dim(1), out_h, out_w}, std::move(out), {a},
                       [ty, tx, planes, h, w, out_h, out_w](const float* g, std::span<float* const> gin) {
                           for (std::int64_t pl = 0; pl < planes; ++pl) {
                               float* dst = gin[0] + pl * h * w;
                               const float* go = g + pl * out_h * out_w;
                               for (int oy = 0; oy < out_h; ++oy) {
                                   const auto& vy = ty[static_cast<std::size_t>(oy)];
                                   for (int ox = 0; ox < out_w; ++ox) {
                                       const auto& vx = tx[static_cast<std::size_t>(ox)];
                                       const float v = go[oy * out_w + ox];
                                       const float top = (1.0f - vy.t) * v, bot = vy.t * v;
                                       dst[vy.i0 * w + vx.i0] += (1.0f - vx.t) * top;
                                       dst[vy.i0 * w + vx.i1] += vx.t * top;
                                       dst[vy.i1 * w + vx.i0] += (1.0f - vx.t) * bot;
                                       dst[vy.i1 * w + vx.i1] += vx.t * bot;
                                   }
                               }
                           }
                       },
                       "resize_bilinear");
}

Tensor l2_normalize_rows(const Tensor& a, float eps) {
    require_rank(a, 2, "l2_normalize_rows", "input");
    const std::int64_t rows = a.dim(0), d = a.dim(1);
    std::vector<float> out(a.data().begin(), a.data().end());
    auto norms = std::make_shared<std::vector<float>>(static_cast<std::size_t>(rows));
    for (std::int64_t i = 0; i < rows; ++i) {
        double ss = 0.0;
        for (std::int64_t j = 0; j < d; ++j) ss += static_cast<double>(out[i * d + j]) * out[i * d + j];
        const float nrm = std::max(static_cast<float>(std::sqrt(ss)), eps);
        (*norms)[static_cast<std::size_t>(i)] = nrm;
        for (std::int64_t j = 0; j < d; ++j) out[i * d + j] /= nrm;
    }
    auto y = std::make_shared<std::vector<float>>(out);
    return make_result(a.shape(), std::move(out), {a},
                       [y, norms, rows, d, eps](const float* g, std::span<float* const> gin) {
                           for (std::int64_t i = 0; i < rows; ++i) {
                               const float nrm = (*norms)[static_cast<std::size_t>(i)];
                               const float* yi = y->data() + i * d;
                               const float* gi = g + i * d;
                               if (nrm > eps) {
                                   double gy = 0.0;
                                   for (std::int64_t j = 0; j < d; ++j) gy += static_cast<double>(gi[j]) * yi[j];
                                   for (std::int64_t j = 0; j < d; ++j)
                                       gin[0][i * d + j] += (gi[j] - yi[j] * static_cast<float>(gy)) / nrm;
                               } else {
                                   for (std::int64_t j = 0; j < d; ++j) gin[0][i * d + j] += gi[j] / eps;
                               }
                           }
                       },
                       "l2_normalize_rows");
}

namespace {

struct VolumeTap {
    std::int64_t offset[8];
    float weight[8];
};

float volume_axis(float c, std::int64_t size, std::int64_t& lo, std::int64_t& hi) {
    float p = (c + 1.0f) * 0.5f * static_cast<float>(size - 1);
    if (!(p > 0.0f)) p = 0.0f;
    if (p > static_cast<float>(size - 1)) p = static_cast<float>(size - 1);
    lo = static_cast<std::int64_t>(p);
    if (size == 1) {
        hi = lo = 0;
        return 0.0f;
    }
    if (lo > size - 2) lo = size - 2;
    hi = lo + 1;
    return p - static_cast<float>(lo);
}

}  // namespace

Tensor sample_volume(const Tensor& volume, const Tensor& coords) {
    require_rank(volume, 4, "sample_volume", "volume");
    require_rank(coords, 2, "sample_volume", "coords");
    if (coords.dim(1) != 3) throw ShapeError("sample_volume: coords must be [M,3]");
    const std::int64_t c = volume.dim(0), d = volume.dim(1), h = volume.dim(2), w = volume.dim(3);
    const std::int64_t m = coords.dim(0);
    const std::int64_t plane = d * h * w;

    auto taps = std::make_shared<std::vector<VolumeTap>>(static_cast<std::size_t>(m));
    auto cd = coords.data();
    for (std::int64_t i = 0; i < m; ++i) {
        std::int64_t x0, x1, y0, y1, z0, z1;
        const float tx = volume_axis(cd[static_cast<std::size_t>(i * 3 + 0)], w, x0, x1);
        const float ty = volume_axis(cd[static_cast<std::size_t>(i * 3 + 1)], h, y0, y1);
        const float tz = volume_axis(cd[static_cast<std::size_t>(i * 3 + 2)], d, z0, z1);
        auto& tap = (*taps)[static_cast<std::size_t>(i)];
        int k = 0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx, ++k) {
                    tap.offset[k] = ((dz ? z1 : z0) * h + (dy ? y1 : y0)) * w + (dx ? x1 : x0);
                    tap.weight[k] = (dz ? tz : 1.0f - tz) * (dy ? ty : 1.0f - ty) * (dx ? tx : 1.0f - tx);
                }
    }
    std::vector<float> out(static_cast<std::size_t>(m * c));
    auto vd = volume.data();
    for (std::int64_t i = 0; i < m; ++i) {
        const auto& tap = (*taps)[static_cast<std::size_t>(i)];
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const float* base = vd.data() + ch * plane;
            float acc = 0.0f;
            for (int k = 0; k < 8; ++k) acc += tap.weight[k] * base[tap.offset[k]];
            out[static_cast<std::size_t>(i * c + ch)] = acc;
        }
    }
    return make_result({m, c}, std::move(out), {volume, coords},
                       [taps, m, c, plane](const float* g, std::span<float* const> gin) {
                           if (!gin[0]) return;
                           for (std::int64_t i = 0; i < m; ++i) {
                               const auto& tap = (*taps)[static_cast<std::size_t>(i)];
                               for (std::int64_t ch = 0; ch < c; ++ch) {
                                   const float gv = g[i * c + ch];
                                   float* base = gin[0] + ch * plane;
                                   for (int k = 0; k < 8; ++k) base[tap.offset[k]] += tap.weight[k] * gv;
                               }
                           }
                       },
                       "sample_volume");
}

Tensor blend_images(const Tensor& weights, const Tensor& images) {
    require_rank(weights, 3, "blend_images", "weights");
    require_rank(images, 4, "blend_images", "images");
    const std::int64_t k = weights.dim(0), h = weights.dim(1), w = weights.dim(2);
    if (images.dim(0) != k || images.dim(1) != 3 || images.dim(2) != h || images.dim(3) != w) {
        throw ShapeError("blend_images: images " + shape_to_string(images.shape()) + " do not match weights " +
                         shape_to_string(weights.shape()));
    }
    const std::int64_t p = h * w;
    std::vector<float> out(static_cast<std::size_t>(3 * p), 0.0f);
    auto wd = weights.data();
    auto id = images.data();
    for (std::int64_t kk = 0; kk < k; ++kk) {
        const float* wk = wd.data() + kk * p;
        for (int c = 0; c < 3; ++c) {
            const float* src = id.data() + (kk * 3 + c) * p;
            float* dst = out.data() + c * p;
            for (std::int64_t i = 0; i < p; ++i) dst[i] += wk[i] * src[i];
        }
    }
    ImplPtr wi = weights.impl(), ii = images.impl();
    return make_result({3, h, w}, std::move(out), {weights, images},
                       [wi, ii, k, p](const float* g, std::span<float* const> gin) {
                           for (std::int64_t kk = 0; kk < k; ++kk) {
                               for (int c = 0; c < 3; ++c) {
                                   const float* gc = g + c * p;
                                   if (gin[0]) {
                                       const float* src = ii->data.data() + (kk * 3 + c) * p;
                                       float* gw = gin[0] + kk * p;
                                       for (std::int64_t i = 0; i < p; ++i) gw[i] += gc[i] * src[i];
                                   }
                                   if (gin[1]) {
                                       const float* wk = wi->data.data() + kk * p;
                                       float* gi = gin[1] + (kk * 3 + c) * p;
                                       for (std::int64_t i = 0; i < p; ++i) gi[i] += gc[i] * wk[i];
                                   }
                               }
                           }
                       },
                       "blend_images");
}

namespace {

struct LutCell {
    std::int32_t row[8];
    float t[3];
    bool inside[3];
};

LutCell lut_cell(const float rgb[3], int n, const std::vector<std::int32_t>* index) {
    LutCell cell{};
    int lo[3];
    for (int a = 0; a < 3; ++a) {
        const auto ac = lutfuse::detail::locate(rgb[a], n);
        lo[a] = ac.lo;
        cell.t[a] = ac.t;
        cell.inside[a] = rgb[a] >= 0.0f && rgb[a] <= 1.0f;
    }
    const std::int64_t n2 = static_cast<std::int64_t>(n) * n;
    int k = 0;
    for (int db = 0; db < 2; ++db)
        for (int dg = 0; dg < 2; ++dg)
            for (int dr = 0; dr < 2; ++dr, ++k) {
                const std::int64_t flat = (lo[0] + dr) + (lo[1] + dg) * static_cast<std::int64_t>(n) + (lo[2] + db) * n2;
                const std::int32_t row = index ? (*index)[static_cast<std::size_t>(flat)] : static_cast<std::int32_t>(flat);
                if (row < 0) throw ShapeError("lut_lookup: lattice node " + std::to_string(flat) + " not provided");
                cell.row[k] = row;
            }
    return cell;
}

}  // namespace

Tensor lut_lookup(const Tensor& nodes, std::shared_ptr<const std::vector<std::int32_t>> index, int n,
                  const Tensor& image) {
    require_rank(nodes, 2, "lut_lookup", "nodes");
    require_rank(image, 3, "lut_lookup", "image");
    if (n < 2) throw ShapeError("lut_lookup: lattice size must be >= 2");
    if (nodes.dim(1) != 3) throw ShapeError("lut_lookup: nodes must be [M,3]");
    if (image.dim(0) != 3) throw ShapeError("lut_lookup: image must be planar [3,H,W]");
    const std::int64_t lattice = static_cast<std::int64_t>(n) * n * n;
    if (index) {
        if (static_cast<std::int64_t>(index->size()) != lattice) throw ShapeError("lut_lookup: index size mismatch");
    } else if (nodes.dim(0) != lattice) {
        throw ShapeError("lut_lookup: dense lookup needs " + std::to_string(lattice) + " nodes, got " +
                         std::to_string(nodes.dim(0)));
    }
    const std::int64_t p = image.dim(1) * image.dim(2);
    std::vector<float> out(static_cast<std::size_t>(3 * p));
    auto img = image.data();
    auto nd = nodes.data();
    for (std::int64_t i = 0; i < p; ++i) {
        const float rgb[3] = {img[static_cast<std::size_t>(i)], img[static_cast<std::size_t>(p + i)],
                              img[static_cast<std::size_t>(2 * p + i)]};
        const LutCell cell = lut_cell(rgb, n, index.get());
        const float tr = cell.t[0], tg = cell.t[1], tb = cell.t[2];
        float acc[3] = {0, 0, 0};
        int k = 0;
        for (int db = 0; db < 2; ++db)
            for (int dg = 0; dg < 2; ++dg)
                for (int dr = 0; dr < 2; ++dr, ++k) {
                    const float wgt = (db ? tb : 1.0f - tb) * (dg ? tg : 1.0f - tg) * (dr ? tr : 1.0f - tr);
                    const float* v = nd.data() + static_cast<std::int64_t>(cell.row[k]) * 3;
                    acc[0] += wgt * v[0];
                    acc[1] += wgt * v[1];
                    acc[2] += wgt * v[2];
                }
        for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(c * p + i)] = acc[c];
    }

    ImplPtr ni = nodes.impl(), ii = image.impl();
    return make_result({3, image.dim(1), image.dim(2)}, std::move(out), {nodes, image},
                       [ni, ii, index, n, p](const float* g, std::span<float* const> gin) {
                           const float span = static_cast<float>(n - 1);
                           for (std::int64_t i = 0; i < p; ++i) {
                               const float rgb[3] = {ii->data[static_cast<std::size_t>(i)],
                                                     ii->data[static_cast<std::size_t>(p + i)],
                                                     ii->data[static_cast<std::size_t>(2 * p + i)]};
                               const LutCell cell = lut_cell(rgb, n, index.get());
                               const float t[3] = {cell.t[0], cell.t[1], cell.t[2]};
                               const float go[3] = {g[i], g[p + i], g[2 * p + i]};
                               float dt[3] = {0, 0, 0};
                               int k = 0;
                               for (int db = 0; db < 2; ++db)
                                   for (int dg = 0; dg < 2; ++dg)
                                       for (int dr = 0; dr < 2; ++dr, ++k) {
                                           const float fr = dr ? t[0] : 1.0f - t[0];
                                           const float fg = dg ? t[1] : 1.0f - t[1];
                                           const float fb = db ? t[2] : 1.0f - t[2];
                                           const std::int64_t row = cell.row[k];
                                           if (gin[0]) {
                                               const float wgt = fb * fg * fr;
                                               for (int c = 0; c < 3; ++c) gin[0][row * 3 + c] += wgt * go[c];
                                           }
                                           if (gin[1]) {
                                               const float* v = ni->data.data() + row * 3;
                                               const float vg = v[0] * go[0] + v[1] * go[1] + v[2] * go[2];
                                               dt[0] += (dr ? 1.0f : -1.0f) * fg * fb * vg;
                                               dt[1] += (dg ? 1.0f : -1.0f) * fr * fb * vg;
                                               dt[2] += (db ? 1.0f : -1.0f) * fr * fg * vg;
                                           }
                                       }
                               if (gin[1]) {
                                   for (int c = 0; c < 3; ++c)
                                       if (cell.inside[c]) gin[1][c * p + i] += span * dt[c];
                               }
                           }
                       },
                       "lut_lookup");
}

LutSupport lut_support(const Tensor& image, int n) {
    require_rank(image, 3, "lut_support", "image");
    if (image.dim(0) != 3) throw ShapeError("lut_support: image must be planar [3,H,W]");
    if (n < 2) throw ShapeError("lut_support: lattice size must be >= 2");
    const std::int64_t lattice = static_cast<std::int64_t>(n) * n * n;
    std::vector<char> used(static_cast<std::size_t>(lattice), 0);
    const std::int64_t p = image.dim(1) * image.dim(2);
    auto img = image.data();
    for (std::int64_t i = 0; i < p; ++i) {
        const float rgb[3] = {img[static_cast<std::size_t>(i)], img[static_cast<std::size_t>(p + i)],
                              img[static_cast<std::size_t>(2 * p + i)]};
        const LutCell cell = lut_cell(rgb, n, nullptr);
        for (int k = 0; k < 8; ++k) used[static_cast<std::size_t>(cell.row[k])] = 1;
    }
    LutSupport s;
    auto index = std::make_shared<std::vector<std::int32_t>>(static_cast<std::size_t>(lattice), -1);
    for (std::int64_t f = 0; f < lattice; ++f) {
        if (!used[static_cast<std::size_t>(f)]) continue;
        (*index)[static_cast<std::size_t>(f)] = static_cast<std::int32_t>(s.nodes.size());
        s.nodes.push_back(static_cast<std::int32_t>(f));
    }
    s.index = std::move(index);
    return s;
}

}  // namespace lutfuse::ad
