#pragma once

// Dense float32 tensors with a dynamic reverse-mode tape.
//
// Every op that sees an input with requires_grad records a Node on its
// output. backward() walks the graph from a scalar loss, accumulating into
// the grad buffers of leaf tensors. The graph lives as long as the tensors
// that reference it.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lutfuse::ad {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct TensorImpl;

// Backward closure: `gout` is the gradient of the output, `gin[i]` the
// gradient buffer of input i (nullptr when that input needs no gradient).
// Closures must accumulate into gin, never assign.
using BackwardFn = std::function<void(const float* gout, std::span<float* const> gin)>;

struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    BackwardFn backward;
    const char* op = "";
};

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
    std::shared_ptr<Node> grad_fn;
};

class Tensor {
public:
    Tensor();
    explicit Tensor(std::shared_ptr<TensorImpl> impl);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    const Shape& shape() const { return impl_->shape; }
    std::int64_t dim(int axis) const;
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

    std::span<float> data() { return impl_->data; }
    std::span<const float> data() const { return impl_->data; }
    float item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool on);
    bool is_leaf() const { return impl_->grad_fn == nullptr; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const float> grad() const { return impl_->grad; }
    std::span<float> mutable_grad() { return impl_->grad; }
    // Allocates the gradient buffer if needed and fills it with zeros.
    void zero_grad();
    void clear_grad() { impl_->grad.clear(); impl_->grad.shrink_to_fit(); }

    // Same values, no graph history, no gradient tracking.
    Tensor detach() const;
    Tensor clone() const;

    bool defined() const { return impl_ != nullptr; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Populates grad on every requires_grad leaf reachable from `loss`.
// Throws ShapeError for a non-scalar loss and Error for a loss without a
// recorded graph.
void backward(const Tensor& loss);

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Builds an op result. Records a Node when grad mode is on and any input
// requires grad; otherwise `fn` is dropped.
Tensor make_result(Shape shape, std::vector<float> values, std::initializer_list<Tensor> inputs,
                   BackwardFn fn, const char* op);
Tensor make_result(Shape shape, std::vector<float> values, const std::vector<Tensor>& inputs,
                   BackwardFn fn, const char* op);

}  // namespace lutfuse::ad
