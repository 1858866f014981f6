#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "xvqa/autodiff/tensor.hpp"

namespace xvqa::ad {

enum class OpKind {
    constant,
    leaf,
    matmul,
    add,
    mul,
    scale,
    sigmoid,
    tanh,
    relu,
    softmax,
    log,
    concat,
    slice,
    embedding,
    sum,
    mean,
    transpose,
    reshape,
    custom,
};

inline const char* to_string(OpKind op) {
    switch (op) {
    case OpKind::constant: return "constant";
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::relu: return "relu";
    case OpKind::softmax: return "softmax";
    case OpKind::log: return "log";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::embedding: return "embedding";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::transpose: return "transpose";
    case OpKind::reshape: return "reshape";
    case OpKind::custom: return "custom";
    }
    return "unknown";
}

template <std::floating_point T>
class Tape;

/// Handle to one node recorded on a Tape. Cheap to copy; valid for the
/// lifetime of the tape that produced it.
template <std::floating_point T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const Shape& shape() const { return tape->shape(id); }
    std::span<const T> value() const { return tape->value(id); }
    std::size_t numel() const { return value().size(); }
    std::size_t rows() const { return shape().empty() ? 1 : shape()[0]; }
    std::size_t cols() const { return shape().size() < 2 ? 1 : shape()[1]; }
    T item() const {
        if (numel() != 1) throw shape_error("item() on non-scalar " + to_string(shape()));
        return value()[0];
    }
};

/// Records primitive applications in order and replays them in reverse to
/// accumulate gradients.
///
/// Parameters are bound by reference: their values are read in place and
/// their gradients are accumulated directly into the parameter's own grad
/// buffer, so running backward on several tapes sums per-example gradients.
/// A tape is confined to one thread at a time.
template <std::floating_point T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    struct Node {
        OpKind op = OpKind::constant;
        Shape shape;
        std::vector<T> value;
        const basic_tensor<T>* bound = nullptr;
        basic_tensor<T>* grad_target = nullptr;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        std::vector<T> grad;
        bool requires_grad = false;
        bool reached = false;
    };

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) { nodes_.reserve(256); }

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const noexcept { return grad_enabled_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    const Node& node(std::size_t id) const { return nodes_.at(id); }

    Var<T> constant(Shape shape, std::vector<T> values) {
        if (numel(shape) != values.size()) {
            throw shape_error("constant shape " + to_string(shape) + " does not match " +
                              std::to_string(values.size()) + " values");
        }
        Node n;
        n.op = OpKind::constant;
        n.shape = std::move(shape);
        n.value = std::move(values);
        return push(std::move(n));
    }

    Var<T> constant(const basic_tensor<T>& t) {
        return constant(t.shape(), std::vector<T>(t.values().begin(), t.values().end()));
    }

    Var<T> filled(Shape shape, T v) {
        const auto count = numel(shape);
        return constant(std::move(shape), std::vector<T>(count, v));
    }

    /// Binds a parameter; participates in differentiation when the tape has
    /// gradients enabled and the parameter requires them.
    Var<T> param(basic_tensor<T>& p) {
        Node n;
        n.op = OpKind::leaf;
        n.shape = p.shape();
        n.bound = &p;
        if (grad_enabled_ && p.requires_grad()) {
            n.grad_target = &p;
            n.requires_grad = true;
        }
        return push(std::move(n));
    }

    /// Binds a parameter read-only (never receives gradients).
    Var<T> param(const basic_tensor<T>& p) {
        Node n;
        n.op = OpKind::leaf;
        n.shape = p.shape();
        n.bound = &p;
        return push(std::move(n));
    }

    /// Owned leaf that requires gradients; read its gradient with grad().
    Var<T> variable(Shape shape, std::vector<T> values) {
        auto v = constant(std::move(shape), std::move(values));
        nodes_[v.id].op = OpKind::leaf;
        nodes_[v.id].requires_grad = grad_enabled_;
        return v;
    }

    /// Appends a node. Used by the primitive implementations and by tests that
    /// need an operation with a custom backward rule.
    Var<T> record(OpKind op, std::vector<std::size_t> inputs, Shape shape, std::vector<T> value,
                  BackwardFn backward) {
        if (numel(shape) != value.size()) {
            throw shape_error(std::string(to_string(op)) + ": output shape " + to_string(shape) +
                              " does not match value size");
        }
        Node n;
        n.op = op;
        n.shape = std::move(shape);
        n.value = std::move(value);
        for (auto in : inputs) {
            if (in >= nodes_.size()) throw std::out_of_range("input node does not precede output");
            n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
        }
        n.inputs = std::move(inputs);
        if (n.requires_grad) n.backward = std::move(backward);
        return push(std::move(n));
    }

    std::span<const T> value(std::size_t id) const {
        const Node& n = nodes_[id];
        return n.bound ? n.bound->values() : std::span<const T>(n.value);
    }

    const Shape& shape(std::size_t id) const { return nodes_[id].shape; }

    bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Accumulation buffer for a node's gradient (zeroed on first use).
    std::span<T> grad_buffer(std::size_t id) {
        Node& n = nodes_[id];
        n.reached = true;
        if (n.grad_target) return n.grad_target->ensure_grad();
        if (n.grad.size() != numel(n.shape)) n.grad.assign(numel(n.shape), T(0));
        return n.grad;
    }

    /// Gradient of the most recent backward pass for a node; zeros when the
    /// node was not reachable from the loss.
    std::vector<T> grad(Var<T> v) const {
        const Node& n = nodes_.at(v.id);
        if (n.grad_target) {
            auto g = n.grad_target->grad();
            if (g.size() == numel(n.shape)) return {g.begin(), g.end()};
        } else if (n.reached && n.grad.size() == numel(n.shape)) {
            return n.grad;
        }
        return std::vector<T>(numel(n.shape), T(0));
    }

    void backward(Var<T> loss) {
        if (loss.tape != this) throw std::invalid_argument("backward: loss does not live on this tape");
        if (numel(nodes_[loss.id].shape) != 1) {
            throw shape_error("backward: loss must be scalar, got " + to_string(nodes_[loss.id].shape));
        }
        for (auto& n : nodes_) {
            n.reached = false;
            n.grad.clear();
        }
        auto g = grad_buffer(loss.id);
        g[0] += T(1);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.reached || !n.requires_grad || !n.backward) continue;
            n.backward(*this, i);
        }
    }

    /// Gradient flowing into node `self` during backward.
    std::span<const T> upstream(std::size_t self) const {
        const Node& n = nodes_[self];
        return n.grad_target ? n.grad_target->grad() : std::span<const T>(n.grad);
    }

private:
    Var<T> push(Node n) {
        nodes_.push_back(std::move(n));
        return Var<T>{this, nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
    bool grad_enabled_;
};

} // namespace xvqa::ad
