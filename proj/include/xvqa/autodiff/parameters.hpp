#pragma once

#include <cmath>
#include <concepts>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "xvqa/autodiff/tensor.hpp"

namespace xvqa::ad {

/// Named parameter map. Iteration order is lexicographic by name, which fixes
/// the checkpoint layout and optimizer traversal order.
template <std::floating_point T>
class ParameterStore {
public:
    using tensor_type = basic_tensor<T>;

    tensor_type& add(const std::string& name, tensor_type t) {
        if (tensors_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
        t.set_requires_grad(true);
        return tensors_.emplace(name, std::move(t)).first->second;
    }

    tensor_type& get(const std::string& name) {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
        return it->second;
    }

    const tensor_type& get(const std::string& name) const {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
        return it->second;
    }

    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    std::size_t size() const noexcept { return tensors_.size(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : tensors_) n += t.numel();
        return n;
    }

    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

    void zero_grad() {
        for (auto& [_, t] : tensors_) t.zero_grad();
    }

    void scale_grad(double factor) {
        for (auto& [_, t] : tensors_)
            for (auto& g : t.grad()) g = static_cast<T>(double(g) * factor);
    }

    /// True when every value is finite.
    bool all_finite() const {
        for (const auto& [_, t] : tensors_)
            for (auto v : t.values())
                if (!std::isfinite(v)) return false;
        return true;
    }

    /// True when every gradient entry is finite.
    bool grads_finite() const {
        for (const auto& [_, t] : tensors_)
            for (auto g : t.grad())
                if (!std::isfinite(g)) return false;
        return true;
    }

    template <std::floating_point U>
    ParameterStore<U> cast() const {
        ParameterStore<U> out;
        for (const auto& [name, t] : tensors_) out.add(name, t.template cast<U>());
        return out;
    }

private:
    std::map<std::string, tensor_type> tensors_;
};

namespace init {

/// Xavier/Glorot uniform for a [fan_in x fan_out] weight.
template <std::floating_point T, class Rng>
basic_tensor<T> xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / double(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    basic_tensor<T> t(Shape{fan_in, fan_out});
    for (auto& v : t.values()) v = static_cast<T>(dist(rng));
    return t;
}

template <std::floating_point T, class Rng>
basic_tensor<T> normal(Shape shape, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    basic_tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(dist(rng));
    return t;
}

template <std::floating_point T>
basic_tensor<T> zeros(Shape shape) {
    return basic_tensor<T>(std::move(shape));
}

} // namespace init

} // namespace xvqa::ad
