#include "lutfuse/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "lutfuse/error.hpp"

namespace lutfuse::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

std::int64_t numel_of(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) {
        if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
        n *= e;
    }
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor() = default;

Tensor::Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    auto n = numel_of(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data.assign(static_cast<std::size_t>(n), value);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
    auto n = numel_of(shape);
    if (static_cast<std::int64_t>(values.size()) != n) {
        throw ShapeError("tensor of shape " + shape_to_string(shape) + " needs " + std::to_string(n) +
                         " values, got " + std::to_string(values.size()));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from({1}, {value}, requires_grad); }

std::int64_t Tensor::dim(int axis) const {
    int r = rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape()));
    }
    return impl_->shape[static_cast<std::size_t>(axis)];
}

float Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
    return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
}

void Tensor::zero_grad() {
    impl_->grad.assign(impl_->data.size(), 0.0f);
}

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

Tensor Tensor::clone() const { return from(shape(), impl_->data, impl_->requires_grad); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace {

Tensor make_result_impl(Shape shape, std::vector<float> values, const Tensor* begin, const Tensor* end,
                        BackwardFn fn, const char* op) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    if (static_cast<std::int64_t>(impl->data.size()) != numel_of(impl->shape)) {
        throw ShapeError(std::string("internal: op ") + op + " produced wrong element count");
    }
    bool needs = false;
    if (g_grad_enabled) {
        for (auto it = begin; it != end; ++it) needs = needs || (it->defined() && it->requires_grad());
    }
    if (needs) {
        auto node = std::make_shared<Node>();
        for (auto it = begin; it != end; ++it) node->inputs.push_back(it->impl());
        node->backward = std::move(fn);
        node->op = op;
        impl->grad_fn = std::move(node);
        impl->requires_grad = true;
    }
    return Tensor(std::move(impl));
}

}  // namespace

Tensor make_result(Shape shape, std::vector<float> values, std::initializer_list<Tensor> inputs, BackwardFn fn,
                   const char* op) {
    return make_result_impl(std::move(shape), std::move(values), inputs.begin(), inputs.end(), std::move(fn), op);
}

Tensor make_result(Shape shape, std::vector<float> values, const std::vector<Tensor>& inputs, BackwardFn fn,
                   const char* op) {
    return make_result_impl(std::move(shape), std::move(values), inputs.data(), inputs.data() + inputs.size(),
                            std::move(fn), op);
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw Error("backward() on an undefined tensor");
    if (loss.numel() != 1) {
        throw ShapeError("backward() needs a scalar loss, got shape " + shape_to_string(loss.shape()));
    }
    if (!loss.requires_grad()) throw Error("backward() on a tensor that is not part of a recorded graph");

    TensorImpl* root = loss.impl().get();
    if (!root->grad_fn) {
        // A leaf loss: d loss / d loss.
        if (root->grad.empty()) root->grad.assign(1, 0.0f);
        root->grad[0] += 1.0f;
        return;
    }

    // Post-order DFS gives a topological order (inputs before consumers).
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (node->grad_fn && next < node->grad_fn->inputs.size()) {
            TensorImpl* child = node->grad_fn->inputs[next++].get();
            if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    std::unordered_map<TensorImpl*, std::vector<float>> interior;
    interior[root].assign(1, 1.0f);

    std::vector<float*> gin;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (!node->grad_fn) continue;
        auto found = interior.find(node);
        if (found == interior.end()) continue;
        const std::vector<float>& gout = found->second;

        gin.assign(node->grad_fn->inputs.size(), nullptr);
        for (std::size_t i = 0; i < gin.size(); ++i) {
            TensorImpl* in = node->grad_fn->inputs[i].get();
            if (!in || !in->requires_grad) continue;
            std::vector<float>& buf = in->grad_fn ? interior[in] : in->grad;
            if (buf.empty()) buf.assign(in->data.size(), 0.0f);
            gin[i] = buf.data();
        }
        node->grad_fn->backward(gout.data(), gin);
        interior.erase(node);
    }
}

}  // namespace lutfuse::ad
