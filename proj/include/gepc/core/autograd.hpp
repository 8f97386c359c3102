#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gepc/core/tensor.hpp"

namespace gepc {

namespace detail {

struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Tensor& grad_buffer() {
        if (!has_grad) {
            grad = Tensor(value.shape());
            has_grad = true;
        }
        return grad;
    }
};

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

/// Disables graph recording for its lifetime (inference, E-steps, scoring).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Handle to a value in the recorded operation graph. Copies share the node.
class Var {
public:
    Var() : node_(std::make_shared<detail::Node>()) {}
    explicit Var(Tensor constant) : node_(std::make_shared<detail::Node>()) {
        node_->value = std::move(constant);
    }
    explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    const Tensor& value() const noexcept { return node_->value; }
    const Shape& shape() const noexcept { return node_->value.shape(); }
    std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
    bool requires_grad() const noexcept { return node_->requires_grad; }
    bool has_grad() const noexcept { return node_->has_grad; }
    const Tensor& grad() const { return node_->grad; }
    real item() const { return node_->value.item(); }

    const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

/// A learned tensor. Holds a persistent leaf node whose gradient accumulates
/// across backprop calls until cleared.
class Parameter {
public:
    Parameter() : node_(std::make_shared<detail::Node>()) { node_->requires_grad = true; }
    explicit Parameter(Tensor init, bool trainable = true) : Parameter() {
        node_->value = std::move(init);
        set_trainable(trainable);
    }

    Var var() const { return Var(node_); }
    operator Var() const { return var(); }  // NOLINT(google-explicit-constructor)

    Tensor& value() noexcept { return node_->value; }
    const Tensor& value() const noexcept { return node_->value; }
    Tensor& grad() { return node_->grad_buffer(); }
    const Tensor& grad() const { return node_->grad_buffer(); }
    const Shape& shape() const noexcept { return node_->value.shape(); }

    bool trainable() const noexcept { return node_->requires_grad; }
    void set_trainable(bool t) noexcept { node_->requires_grad = t; }

    void zero_grad() {
        if (node_->has_grad) node_->grad.zero();
    }

private:
    std::shared_ptr<detail::Node> node_;
};

/// Named view of a parameter, used for optimizers and serialization.
struct NamedParameter {
    std::string name;
    Parameter* param;
};

namespace detail {

inline void require_finite(const Tensor& t, const char* op, const char* phase) {
    if (!t.all_finite())
        throw NumericError(std::string("non-finite values in ") + phase + " of " + op);
}

/// Builds the result node of an operation; records the backward rule only
/// when grad mode is on and some input needs a gradient.
inline Var make_result(const char* op, Tensor value, std::vector<Var> inputs,
                       std::function<void(Node&)> backward) {
    require_finite(value, op, "forward");
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = op;
    if (grad_mode()) {
        bool any = false;
        for (const auto& in : inputs) any = any || in.requires_grad();
        if (any) {
            node->requires_grad = true;
            node->parents.reserve(inputs.size());
            for (auto& in : inputs) node->parents.push_back(in.node());
            node->backward = std::move(backward);
        }
    }
    return Var(std::move(node));
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Accumulates d(loss)/d(param) into
/// every trainable Parameter reachable through the recorded graph.
inline void backprop(const Var& loss) {
    if (loss.value().size() != 1)
        throw ShapeError("backprop requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            detail::Node* p = n->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    loss.node()->grad_buffer()[0] += real{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward && n->has_grad) {
            n->backward(*n);
        }
    }
    for (detail::Node* n : order) {
        if (n->parents.empty() && n->has_grad) detail::require_finite(n->grad, n->op, "backward");
    }
}

}  // namespace gepc
