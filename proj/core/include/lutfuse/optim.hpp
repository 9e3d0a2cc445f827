#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lutfuse/tensor.hpp"

namespace lutfuse::ad {

class Checkpoint;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct AdamWConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.01f;
};

struct OptimizerState {
    std::int64_t step = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
    AdamWConfig config;
};

// Decoupled-weight-decay Adam over a fixed parameter list.
class AdamW {
public:
    AdamW(std::vector<NamedTensor> params, AdamWConfig config);

    // Requires every parameter to hold a gradient; throws naming the first
    // one that does not.
    void step();
    // Allocates (or resets) a zero gradient on every parameter.
    void zero_grad();

    void set_lr(float lr) { state_.config.lr = lr; }
    float lr() const { return state_.config.lr; }
    const OptimizerState& state() const { return state_; }
    const std::vector<NamedTensor>& params() const { return params_; }

    // Moments are stored as "opt/m/<param>", "opt/v/<param>" and the step
    // counter as "opt/step".
    void save_to(Checkpoint& ckpt) const;
    void load_from(const Checkpoint& ckpt);

private:
    std::vector<NamedTensor> params_;
    OptimizerState state_;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before scaling.
double clip_grad_norm(const std::vector<NamedTensor>& params, double max_norm);

}  // namespace lutfuse::ad
