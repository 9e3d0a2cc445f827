#pragma once

// Training objectives. Tensor-valued losses are scalars of shape (1) and
// differentiable unless noted.

#include <span>
#include <vector>

#include "lutfuse/dataset.hpp"
#include "lutfuse/image.hpp"
#include "lutfuse/lut.hpp"
#include "lutfuse/tensor.hpp"

namespace lutfuse {

struct LossConfig {
    float alpha = 0.05f;   // grid distillation weight
    float beta = 0.09f;    // long-range weight
    float lambda1 = 0.9f;  // paired weight
    float lambda2 = 0.1f;  // unpaired weight

    // Throws ConfigError when any weight is negative or not finite.
    void validate() const;
};

struct MefSsimConfig {
    int patch_size = 11;
    int stride = 5;
    float stability_c = 9e-4f;

    // Throws ConfigError unless patch_size is odd and >= 3, stride >= 1 and
    // stability_c > 0.
    void validate() const;
};

// Contrast/structure decomposition of K co-located patches.
struct PatchDecomposition {
    std::vector<double> l;               // mean intensity per input
    std::vector<double> c;               // ‖x_k − l_k‖
    std::vector<std::vector<double>> s;  // (x_k − l_k) / c_k, zero when c_k = 0
    double c_hat = 0.0;                  // max_k c_k
    std::vector<double> s_hat;           // Σ c_k s_k normalised, zero when degenerate
    std::vector<double> target;          // c_hat · s_hat
};

// `patches[k]` holds the samples of input k; all the same length.
PatchDecomposition decompose_patches(const std::vector<std::vector<double>>& patches);

// mean |a − b|; ShapeError on mismatch.
ad::Tensor l1_loss(const ad::Tensor& a, const ad::Tensor& b);

// mean |V − V̂| over matching node sets. V̂ is treated as a constant.
ad::Tensor grid_distill_loss(const ad::Tensor& v_nodes, const ad::Tensor& v_hat_nodes);
// Full-grid value; ConfigError when the resolutions differ.
double grid_distill_loss(const Lut3d& v, const Lut3d& v_hat);

// L1 distance between the LUT and ground-truth correlation matrices. The
// ground-truth side is treated as a constant.
ad::Tensor long_range_loss(const ad::Tensor& m_lut, const ad::Tensor& m_truth);

// L1 + α·L_d1 + β·L_lr
ad::Tensor total_student_loss(const ad::Tensor& l1, const ad::Tensor& d1, const ad::Tensor& lr, const LossConfig& cfg);
double total_student_loss(double l1, double d1, double lr, const LossConfig& cfg);

// Mean patchwise structural score of `pred` against the desired patches
// built from `inputs`, over all channels and valid patch positions;
// in [−1, 1]. `pred` is planar [3,H,W]. ShapeError when sizes differ or
// the patch exceeds the image.
ad::Tensor mef_ssim_score(std::span<const ImageRgb> inputs, const ad::Tensor& pred, const MefSsimConfig& cfg = {});
double mef_ssim_score(std::span<const ImageRgb> inputs, const ImageRgb& pred, const MefSsimConfig& cfg = {});
// 1 − score; differentiable with respect to pred.
ad::Tensor mef_ssim_loss(std::span<const ImageRgb> inputs, const ad::Tensor& pred, const MefSsimConfig& cfg = {});

// λ1·paired + λ2·unpaired
ad::Tensor semi_supervised_total(const ad::Tensor& paired, const ad::Tensor& unpaired, const LossConfig& cfg);
double semi_supervised_total(double paired, double unpaired, const LossConfig& cfg);

}  // namespace lutfuse
