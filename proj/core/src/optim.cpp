#include "lutfuse/optim.hpp"

#include <cmath>

#include "lutfuse/checkpoint.hpp"
#include "lutfuse/error.hpp"

namespace lutfuse::ad {

AdamW::AdamW(std::vector<NamedTensor> params, AdamWConfig config) : params_(std::move(params)) {
    if (!(config.beta1 > 0.0f && config.beta1 < 1.0f) || !(config.beta2 > 0.0f && config.beta2 < 1.0f)) {
        throw ConfigError("AdamW betas must lie in (0,1)");
    }
    if (!(config.lr > 0.0f) || !std::isfinite(config.lr)) throw ConfigError("AdamW learning rate must be positive");
    state_.config = config;
    for (const auto& p : params_) {
        state_.m.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
        state_.v.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) {
        auto impl = p.tensor.impl();
        impl->grad.assign(impl->data.size(), 0.0f);
    }
}

void AdamW::step() {
    for (const auto& p : params_) {
        if (!p.tensor.has_grad()) throw Error("AdamW: parameter '" + p.name + "' has no gradient");
    }
    const auto& c = state_.config;
    state_.step += 1;
    const double t = static_cast<double>(state_.step);
    const float bias1 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta1), t));
    const float bias2 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta2), t));
    const float decay = 1.0f - c.lr * c.weight_decay;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto impl = params_[i].tensor.impl();
        auto& m = state_.m[i];
        auto& v = state_.v[i];
        for (std::size_t j = 0; j < impl->data.size(); ++j) {
            const float g = impl->grad[j];
            m[j] = c.beta1 * m[j] + (1.0f - c.beta1) * g;
            v[j] = c.beta2 * v[j] + (1.0f - c.beta2) * g * g;
            const float mhat = m[j] / bias1;
            const float vhat = v[j] / bias2;
            float& w = impl->data[j];
            w *= decay;
            w -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

void AdamW::save_to(Checkpoint& ckpt) const {
    ckpt.put("opt/step", {1}, {static_cast<float>(state_.step)});
    for (std::size_t i = 0; i < params_.size(); ++i) {
        ckpt.put("opt/m/" + params_[i].name, params_[i].tensor.shape(), state_.m[i]);
        ckpt.put("opt/v/" + params_[i].name, params_[i].tensor.shape(), state_.v[i]);
    }
}

void AdamW::load_from(const Checkpoint& ckpt) {
    state_.step = static_cast<std::int64_t>(ckpt.at("opt/step").values.at(0));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& m = ckpt.at("opt/m/" + params_[i].name);
        const auto& v = ckpt.at("opt/v/" + params_[i].name);
        if (m.values.size() != state_.m[i].size() || v.values.size() != state_.v[i].size()) {
            throw ParseError("optimizer state for '" + params_[i].name + "' has the wrong size");
        }
        state_.m[i] = m.values;
        state_.v[i] = v.values;
    }
}

double clip_grad_norm(const std::vector<NamedTensor>& params, double max_norm) {
    double ss = 0.0;
    for (const auto& p : params) {
        for (float g : p.tensor.grad()) ss += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(ss);
    if (max_norm > 0.0 && norm > max_norm) {
        const float s = static_cast<float>(max_norm / (norm + 1e-6));
        for (const auto& p : params) {
            for (float& g : p.tensor.impl()->grad) g *= s;
        }
    }
    return norm;
}

}  // namespace lutfuse::ad
