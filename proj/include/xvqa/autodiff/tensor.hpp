#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xvqa/error.hpp"

namespace xvqa::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

/// Dense row-major array with an optional gradient buffer of the same shape.
///
/// Scalars are represented with shape {1}. A zero-sized leading dimension is
/// allowed so that empty sequences (e.g. an empty embedding gather) have a
/// well-defined [0 x d] result.
template <std::floating_point T>
class basic_tensor {
public:
    using value_type = T;

    basic_tensor() = default;

    explicit basic_tensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), values_(ad::numel(shape_), fill) {}

    basic_tensor(Shape shape, std::vector<T> values)
        : shape_(std::move(shape)), values_(std::move(values)) {
        if (ad::numel(shape_) != values_.size()) {
            throw shape_error("tensor shape " + to_string(shape_) + " does not match " +
                              std::to_string(values_.size()) + " values");
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t numel() const noexcept { return values_.size(); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t rows() const noexcept { return shape_.empty() ? 1 : shape_[0]; }
    std::size_t cols() const noexcept { return shape_.size() < 2 ? 1 : shape_[1]; }

    std::span<T> values() noexcept { return values_; }
    std::span<const T> values() const noexcept { return values_; }
    std::vector<T>& storage() noexcept { return values_; }

    T& operator[](std::size_t i) { return values_[i]; }
    const T& operator[](std::size_t i) const { return values_[i]; }
    T& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    bool requires_grad() const noexcept { return requires_grad_; }
    void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

    bool has_grad() const noexcept { return !grad_.empty() || values_.empty(); }
    std::span<T> grad() noexcept { return grad_; }
    std::span<const T> grad() const noexcept { return grad_; }

    /// Allocates the gradient buffer if needed and fills it with zeros.
    void zero_grad() { grad_.assign(values_.size(), T(0)); }
    /// Drops the gradient buffer entirely.
    void clear_grad() noexcept { grad_.clear(); grad_.shrink_to_fit(); }

    /// Gradient buffer, allocated (zeroed) on first use.
    std::span<T> ensure_grad() {
        if (grad_.size() != values_.size()) grad_.assign(values_.size(), T(0));
        return grad_;
    }

    template <std::floating_point U>
    basic_tensor<U> cast() const {
        basic_tensor<U> out(shape_);
        std::transform(values_.begin(), values_.end(), out.values().begin(),
                       [](T v) { return static_cast<U>(v); });
        out.set_requires_grad(requires_grad_);
        return out;
    }

    friend bool operator==(const basic_tensor& a, const basic_tensor& b) {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    Shape shape_;
    std::vector<T> values_;
    std::vector<T> grad_;
    bool requires_grad_ = false;
};

using Tensor = basic_tensor<float>;

} // namespace xvqa::ad
