#pragma once

// Differentiable tensor operations. Layouts are row-major; images and
// feature maps are NCHW (or CHW where noted).

#include <cstdint>
#include <memory>
#include <vector>

#include "lutfuse/tensor.hpp"

namespace lutfuse::ad {

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);
Tensor abs(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, float s) { return scale(a, s); }
inline Tensor operator*(float s, const Tensor& a) { return scale(a, s); }

// Σ_k w[k] · xs[k]; all xs share a shape, w has one entry per x.
Tensor weighted_sum(const std::vector<Tensor>& xs, const Tensor& w);

// Reductions to a scalar of shape (1).
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// mean(|a - b|)
Tensor l1_distance(const Tensor& a, const Tensor& b);

// Shape manipulation.
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& axes);
Tensor transpose(const Tensor& a);  // 2-D only
// Concatenates 2-D tensors along columns.
Tensor concat_columns(const Tensor& a, const Tensor& b);

// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);

// input [B,F], weight [G,F], bias [G] -> [B,G]
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

// input [N,C,H,W], weight [OC,C,kH,kW], bias [OC].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);

enum class Activation { relu, elu, softmax_lastdim };

Tensor relu(const Tensor& a);
Tensor elu(const Tensor& a, float alpha = 1.0f);
Tensor softmax(const Tensor& a, int axis);
Tensor activation(const Tensor& a, Activation kind);

// [N,C,H,W] -> [N,C,oh,ow]; bins follow floor/ceil boundaries.
Tensor adaptive_avg_pool2d(const Tensor& a, int out_h, int out_w);
// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& a);

// Half-pixel-centre bilinear resampling of [N,C,H,W] to [N,C,oh,ow].
Tensor resize_bilinear(const Tensor& a, int out_h, int out_w);

// Row-wise L2 normalisation of a [R,D] tensor: x / max(|x|, eps).
Tensor l2_normalize_rows(const Tensor& a, float eps = 1e-8f);

// Trilinear sampling of a [C,D,H,W] volume at coords [M,3] given as
// (x,y,z) in [-1,1] along (W,H,D) with aligned corners. Returns [M,C].
// Differentiable with respect to the volume only.
Tensor sample_volume(const Tensor& volume, const Tensor& coords);

// Blends K images: weights [K,H,W], images [K,3,H,W] -> [3,H,W].
// Pixel p of the output is Σ_k weights[k,p] · images[k,:,p].
Tensor blend_images(const Tensor& weights, const Tensor& images);

// Trilinear LUT application on a planar [3,H,W] image.
//
// `nodes` holds RGB values for a subset of the n³ lattice ([M,3]);
// `index` maps flat lattice index (r + g·n + b·n²) to a row of `nodes`,
// or is null when nodes is the full lattice in that order. Input colours
// are clamped to [0,1]; the output is not clamped. Differentiable with
// respect to both nodes and image.
Tensor lut_lookup(const Tensor& nodes, std::shared_ptr<const std::vector<std::int32_t>> index, int n,
                  const Tensor& image);

// Lattice nodes read by lut_lookup for a planar [3,H,W] image: `nodes`
// lists flat indices (r + g·n + b·n²) in ascending order and `index` maps
// each flat index to its position in `nodes` (-1 when unused).
struct LutSupport {
    std::vector<std::int32_t> nodes;
    std::shared_ptr<const std::vector<std::int32_t>> index;
};
LutSupport lut_support(const Tensor& image, int n);

}  // namespace lutfuse::ad
