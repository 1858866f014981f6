#pragma once

#include "xvqa/autodiff/ops.hpp"

// Composite helpers built only from the primitive catalog.

namespace xvqa::ad {

/// [1 x n] -> [rows x n] as ones(rows x 1) * x.
template <class T>
Var<T> repeat_rows(Var<T> x, std::size_t rows) {
    if (rows == 1 && x.rows() == 1) return x;
    return matmul(x.tape->filled(Shape{rows, 1}, T(1)), x);
}

/// [r x 1] -> [r x cols] as x * ones(1 x cols).
template <class T>
Var<T> repeat_cols(Var<T> x, std::size_t cols) {
    return matmul(x, x.tape->filled(Shape{1, cols}, T(1)));
}

/// x W + b, with b [1 x n] repeated over the rows of x.
template <class T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
    auto xw = matmul(x, w);
    return add(xw, repeat_rows(b, xw.rows()));
}

template <class T>
Var<T> subtract(Var<T> a, Var<T> b) {
    return add(a, scale(b, -1.0));
}

/// 1 - x
template <class T>
Var<T> one_minus(Var<T> x) {
    return add(x.tape->filled(x.shape(), T(1)), scale(x, -1.0));
}

/// Floor added to probabilities before log, so float32 underflow never yields log(0).
inline constexpr double kLogFloor = 1e-30;

/// log(softmax(x) + kLogFloor) along `axis`.
template <class T>
Var<T> log_probabilities(Var<T> x, std::size_t axis) {
    auto p = softmax(x, axis);
    return log(add(p, x.tape->filled(p.shape(), static_cast<T>(kLogFloor))));
}

/// -log softmax(logits)[target] for a [1 x C] row.
template <class T>
Var<T> cross_entropy(Var<T> logits, std::size_t target) {
    const std::size_t c = logits.numel();
    if (target >= c) throw std::out_of_range("cross_entropy: target out of range");
    std::vector<T> onehot(c, T(0));
    onehot[target] = T(1);
    auto logp = log_probabilities(reshape(logits, Shape{1, c}), 1);
    return scale(sum(mul(logp, logits.tape->constant(Shape{1, c}, std::move(onehot)))), -1.0);
}

} // namespace xvqa::ad
