#include "lutfuse/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "lutfuse/error.hpp"
#include "lutfuse/ops.hpp"

namespace lutfuse {

using ad::Tensor;

void LossConfig::validate() const {
    const std::pair<const char*, float> fields[] = {
        {"alpha", alpha}, {"beta", beta}, {"lambda1", lambda1}, {"lambda2", lambda2}};
    for (const auto& [name, v] : fields) {
        if (!(v >= 0.0f) || !std::isfinite(v)) {
            throw ConfigError(std::string("loss weight ") + name + " must be finite and non-negative");
        }
    }
}

void MefSsimConfig::validate() const {
    if (patch_size < 3 || patch_size % 2 == 0) throw ConfigError("MEF-SSIM patch size must be odd and at least 3");
    if (stride < 1) throw ConfigError("MEF-SSIM stride must be at least 1");
    if (!(stability_c > 0.0f)) throw ConfigError("MEF-SSIM stability constant must be positive");
}

PatchDecomposition decompose_patches(const std::vector<std::vector<double>>& patches) {
    if (patches.empty()) throw ShapeError("decompose_patches: no inputs");
    const std::size_t n = patches.front().size();
    PatchDecomposition d;
    d.s_hat.assign(n, 0.0);
    d.target.assign(n, 0.0);
    std::vector<double> sum(n, 0.0);
    for (const auto& p : patches) {
        if (p.size() != n) throw ShapeError("decompose_patches: patches differ in size");
        double mu = 0;
        for (double v : p) mu += v;
        mu /= static_cast<double>(n);
        double c = 0;
        for (double v : p) c += (v - mu) * (v - mu);
        c = std::sqrt(c);
        std::vector<double> s(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            sum[i] += p[i] - mu;
            if (c > 0) s[i] = (p[i] - mu) / c;
        }
        d.l.push_back(mu);
        d.c.push_back(c);
        d.s.push_back(std::move(s));
        d.c_hat = std::max(d.c_hat, c);
    }
    double nrm = 0;
    for (double v : sum) nrm += v * v;
    nrm = std::sqrt(nrm);
    if (nrm > 0) {
        for (std::size_t i = 0; i < n; ++i) {
            d.s_hat[i] = sum[i] / nrm;
            d.target[i] = d.c_hat * d.s_hat[i];
        }
    }
    return d;
}

Tensor l1_loss(const Tensor& a, const Tensor& b) { return ad::l1_distance(a, b); }

Tensor grid_distill_loss(const Tensor& v_nodes, const Tensor& v_hat_nodes) {
    if (v_nodes.shape() != v_hat_nodes.shape()) {
        throw ShapeError("grid_distill_loss: " + ad::shape_to_string(v_nodes.shape()) + " vs " +
                         ad::shape_to_string(v_hat_nodes.shape()));
    }
    return ad::l1_distance(v_nodes, v_hat_nodes.detach());
}

double grid_distill_loss(const Lut3d& v, const Lut3d& v_hat) {
    if (v.size() != v_hat.size()) {
        throw ConfigError("grid_distill_loss: resolutions " + std::to_string(v.size()) + " and " +
                          std::to_string(v_hat.size()) + " differ");
    }
    double acc = 0;
    const auto a = v.values(), b = v_hat.values();
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(static_cast<double>(a[i]) - b[i]);
    return acc / static_cast<double>(a.size());
}

Tensor long_range_loss(const Tensor& m_lut, const Tensor& m_truth) {
    if (m_lut.shape() != m_truth.shape()) throw ShapeError("long_range_loss: correlation matrices differ in shape");
    return ad::l1_distance(m_lut, m_truth.detach());
}

Tensor total_student_loss(const Tensor& l1, const Tensor& d1, const Tensor& lr, const LossConfig& cfg) {
    cfg.validate();
    return ad::add(ad::add(l1, ad::scale(d1, cfg.alpha)), ad::scale(lr, cfg.beta));
}

double total_student_loss(double l1, double d1, double lr, const LossConfig& cfg) {
    cfg.validate();
    return l1 + static_cast<double>(cfg.alpha) * d1 + static_cast<double>(cfg.beta) * lr;
}

namespace {

struct MefResult {
    double score = 0.0;
    std::vector<float> grad;  // d score / d pred, planar
};

MefResult mef_ssim_impl(std::span<const ImageRgb> inputs, std::span<const float> pred, int h, int w,
                        const MefSsimConfig& cfg, bool want_grad) {
    cfg.validate();
    if (inputs.empty()) throw ShapeError("MEF-SSIM needs at least one input image");
    for (const auto& img : inputs) {
        if (img.height() != h || img.width() != w) throw ShapeError("MEF-SSIM inputs and prediction differ in size");
    }
    const int p = cfg.patch_size, stride = cfg.stride;
    if (p > h || p > w) {
        throw ShapeError("MEF-SSIM patch " + std::to_string(p) + " exceeds image " + std::to_string(h) + "x" +
                         std::to_string(w));
    }
    const std::size_t n = static_cast<std::size_t>(p) * p;
    const double nd = static_cast<double>(n);
    const double cst = cfg.stability_c;
    std::vector<std::vector<float>> planar;
    for (const auto& img : inputs) planar.push_back(img.to_planar());
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    MefResult res;
    if (want_grad) res.grad.assign(3 * plane, 0.0f);
    std::vector<std::vector<double>> patches(inputs.size(), std::vector<double>(n));
    std::vector<double> y(n);
    std::vector<std::size_t> idx(n);
    std::size_t count = 0;
    double total = 0;
    std::vector<double> grad_acc(want_grad ? 3 * plane : 0, 0.0);

    for (int c = 0; c < 3; ++c)
        for (int y0 = 0; y0 + p <= h; y0 += stride)
            for (int x0 = 0; x0 + p <= w; x0 += stride) {
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < p; ++j)
                        idx[static_cast<std::size_t>(i * p + j)] =
                            static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(y0 + i) * w + x0 + j;
                for (std::size_t k = 0; k < inputs.size(); ++k)
                    for (std::size_t i = 0; i < n; ++i) patches[k][i] = planar[k][idx[i]];
                const auto d = decompose_patches(patches);
                double my = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    y[i] = pred[idx[i]];
                    my += y[i];
                }
                my /= nd;
                double mt = 0, vt = 0, vy = 0, cov = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double dy = y[i] - my;
                    mt += d.target[i];
                    vt += d.target[i] * d.target[i];
                    vy += dy * dy;
                    cov += d.target[i] * dy;
                }
                mt /= nd;
                vt /= nd;
                vy /= nd;
                cov /= nd;
                const double num = 2 * cov + cst, den = vt + vy + cst;
                total += num / den;
                ++count;
                if (want_grad) {
                    for (std::size_t i = 0; i < n; ++i) {
                        const double dcov = (d.target[i] - mt) / nd;
                        const double dvy = 2 * (y[i] - my) / nd;
                        grad_acc[idx[i]] += (2 * dcov * den - num * dvy) / (den * den);
                    }
                }
            }
    res.score = total / static_cast<double>(count);
    if (want_grad) {
        for (std::size_t i = 0; i < grad_acc.size(); ++i) res.grad[i] = static_cast<float>(grad_acc[i] / count);
    }
    return res;
}

void require_planar(const Tensor& pred) {
    if (pred.rank() != 3 || pred.dim(0) != 3) {
        throw ShapeError("MEF-SSIM prediction must be [3,H,W], got " + ad::shape_to_string(pred.shape()));
    }
}

}  // namespace

Tensor mef_ssim_score(std::span<const ImageRgb> inputs, const Tensor& pred, const MefSsimConfig& cfg) {
    require_planar(pred);
    const bool want_grad = pred.requires_grad() && ad::grad_enabled();
    auto res = mef_ssim_impl(inputs, pred.data(), static_cast<int>(pred.dim(1)), static_cast<int>(pred.dim(2)), cfg,
                             want_grad);
    auto grad = std::make_shared<std::vector<float>>(std::move(res.grad));
    return ad::make_result({1}, {static_cast<float>(res.score)}, {pred},
                           [grad](const float* g, std::span<float* const> gin) {
                               if (!gin[0]) return;
                               for (std::size_t i = 0; i < grad->size(); ++i) gin[0][i] += g[0] * (*grad)[i];
                           },
                           "mef_ssim");
}

double mef_ssim_score(std::span<const ImageRgb> inputs, const ImageRgb& pred, const MefSsimConfig& cfg) {
    const auto planar = pred.to_planar();
    return mef_ssim_impl(inputs, planar, pred.height(), pred.width(), cfg, false).score;
}

Tensor mef_ssim_loss(std::span<const ImageRgb> inputs, const Tensor& pred, const MefSsimConfig& cfg) {
    return ad::add_scalar(ad::scale(mef_ssim_score(inputs, pred, cfg), -1.0f), 1.0f);
}

Tensor semi_supervised_total(const Tensor& paired, const Tensor& unpaired, const LossConfig& cfg) {
    cfg.validate();
    return ad::add(ad::scale(paired, cfg.lambda1), ad::scale(unpaired, cfg.lambda2));
}

double semi_supervised_total(double paired, double unpaired, const LossConfig& cfg) {
    cfg.validate();
    return static_cast<double>(cfg.lambda1) * paired + static_cast<double>(cfg.lambda2) * unpaired;
}

}  // namespace lutfuse
