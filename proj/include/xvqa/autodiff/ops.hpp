#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "xvqa/autodiff/tape.hpp"

// Primitive catalog. Values are stored in T; every reduction (matmul inner
// products, softmax normalizers, sum/mean) accumulates in double.

namespace xvqa::ad {

namespace detail {

inline double dot(const float* a, const float* b, std::size_t n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += double(a[i]) * double(b[i]);
        s1 += double(a[i + 1]) * double(b[i + 1]);
        s2 += double(a[i + 2]) * double(b[i + 2]);
        s3 += double(a[i + 3]) * double(b[i + 3]);
    }
    for (; i < n; ++i) s0 += double(a[i]) * double(b[i]);
    return (s0 + s1) + (s2 + s3);
}

inline double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

inline std::vector<double>& scratch(std::size_t n) {
    thread_local std::vector<double> buf;
    if (buf.size() < n) buf.resize(n);
    return buf;
}

/// C[m x n] = A[m x k] * B[k x n]
template <class T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    auto& acc = scratch(n);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill_n(acc.begin(), n, 0.0);
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const T* brow = b + p * n;
            double* out = acc.data();
            for (std::size_t j = 0; j < n; ++j) out[j] += av * double(brow[j]);
        }
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<T>(acc[j]);
    }
}

template <class T>
void require_same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (a.tape != b.tape || a.tape == nullptr) {
        throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
    }
}

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw shape_error(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                          to_string(b.shape()));
    }
}

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t len = 1;
    std::size_t inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
    if (axis >= s.size()) {
        throw shape_error(std::string(op) + ": invalid axis " + std::to_string(axis) + " for shape " +
                          to_string(s));
    }
    AxisSplit out;
    for (std::size_t i = 0; i < axis; ++i) out.outer *= s[i];
    out.len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) out.inner *= s[i];
    return out;
}

template <class T, class F, class G>
Var<T> unary(Var<T> x, OpKind op, F&& forward, G&& derivative) {
    auto xv = x.value();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = static_cast<T>(forward(double(xv[i])));
    const auto xi = x.id;
    return x.tape->record(op, {xi}, x.shape(), std::move(out),
                          [xi, derivative](Tape<T>& t, std::size_t self) {
                              if (!t.needs_grad(xi)) return;
                              auto g = t.upstream(self);
                              auto y = t.value(self);
                              auto xin = t.value(xi);
                              auto gx = t.grad_buffer(xi);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  gx[i] += static_cast<T>(double(g[i]) * derivative(double(xin[i]), double(y[i])));
                              }
                          });
}

} // namespace detail

/// Matrix product of a [m x k] and b [k x n].
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b, "matmul");
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
        throw shape_error("matmul: shape mismatch " + to_string(sa) + " x " + to_string(sb));
    }
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    std::vector<T> out(m * n);
    detail::gemm(a.value().data(), b.value().data(), out.data(), m, k, n);
    const auto ai = a.id, bi = b.id;
    return a.tape->record(OpKind::matmul, {ai, bi}, Shape{m, n}, std::move(out),
                          [ai, bi, m, k, n](Tape<T>& t, std::size_t self) {
                              auto g = t.upstream(self);
                              auto av = t.value(ai);
                              auto bv = t.value(bi);
                              if (t.needs_grad(ai)) {
                                  // dA = dC * B^T
                                  auto ga = t.grad_buffer(ai);
                                  for (std::size_t i = 0; i < m; ++i) {
                                      for (std::size_t p = 0; p < k; ++p) {
                                          ga[i * k + p] += static_cast<T>(
                                              detail::dot(g.data() + i * n, bv.data() + p * n, n));
                                      }
                                  }
                              }
                              if (t.needs_grad(bi)) {
                                  // dB = A^T * dC
                                  auto gb = t.grad_buffer(bi);
                                  auto& acc = detail::scratch(n);
                                  for (std::size_t p = 0; p < k; ++p) {
                                      std::fill_n(acc.begin(), n, 0.0);
                                      double* out = acc.data();
                                      for (std::size_t i = 0; i < m; ++i) {
                                          const double av_ip = av[i * k + p];
                                          const T* grow = g.data() + i * n;
                                          for (std::size_t j = 0; j < n; ++j) out[j] += av_ip * double(grow[j]);
                                      }
                                      T* gbrow = gb.data() + p * n;
                                      for (std::size_t j = 0; j < n; ++j) gbrow[j] += static_cast<T>(out[j]);
                                  }
                              }
                          });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b, "add");
    detail::require_same_shape(a, b, "add");
    auto av = a.value();
    auto bv = b.value();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    const auto ai = a.id, bi = b.id;
    return a.tape->record(OpKind::add, {ai, bi}, a.shape(), std::move(out), [ai, bi](Tape<T>& t, std::size_t self) {
        auto g = t.upstream(self);
        for (auto in : {ai, bi}) {
            if (!t.needs_grad(in)) continue;
            auto gi = t.grad_buffer(in);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

/// Hadamard product.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    detail::require_same_tape(a, b, "mul");
    detail::require_same_shape(a, b, "mul");
    auto av = a.value();
    auto bv = b.value();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    const auto ai = a.id, bi = b.id;
    return a.tape->record(OpKind::mul, {ai, bi}, a.shape(), std::move(out), [ai, bi](Tape<T>& t, std::size_t self) {
        auto g = t.upstream(self);
        auto av = t.value(ai);
        auto bv = t.value(bi);
        if (t.needs_grad(ai)) {
            auto ga = t.grad_buffer(ai);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.needs_grad(bi)) {
            auto gb = t.grad_buffer(bi);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

/// Multiplication by a constant scalar.
template <class T>
Var<T> scale(Var<T> x, double factor) {
    auto xv = x.value();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = static_cast<T>(factor * double(xv[i]));
    const auto xi = x.id;
    return x.tape->record(OpKind::scale, {xi}, x.shape(), std::move(out), [xi, factor](Tape<T>& t, std::size_t self) {
        if (!t.needs_grad(xi)) return;
        auto g = t.upstream(self);
        auto gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += static_cast<T>(factor * double(g[i]));
    });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
    return detail::unary(
        x, OpKind::sigmoid, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

template <class T>
Var<T> tanh(Var<T> x) {
    return detail::unary(
        x, OpKind::tanh, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

template <class T>
Var<T> relu(Var<T> x) {
    return detail::unary(
        x, OpKind::relu, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

/// Natural logarithm; inputs are expected to be positive.
template <class T>
Var<T> log(Var<T> x) {
    return detail::unary(
        x, OpKind::log, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

/// Softmax along `axis`, computed with max-subtraction.
template <class T>
Var<T> softmax(Var<T> x, std::size_t axis) {
    const auto split = detail::split_axis(x.shape(), axis, "softmax");
    auto xv = x.value();
    std::vector<T> out(xv.size());
    for (std::size_t o = 0; o < split.outer; ++o) {
        for (std::size_t in = 0; in < split.inner; ++in) {
            const std::size_t base = o * split.len * split.inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < split.len; ++a) mx = std::max(mx, double(xv[base + a * split.inner]));
            double z = 0;
            for (std::size_t a = 0; a < split.len; ++a) z += std::exp(double(xv[base + a * split.inner]) - mx);
            for (std::size_t a = 0; a < split.len; ++a) {
                const auto idx = base + a * split.inner;
                out[idx] = static_cast<T>(std::exp(double(xv[idx]) - mx) / z);
            }
        }
    }
    const auto xi = x.id;
    return x.tape->record(OpKind::softmax, {xi}, x.shape(), std::move(out), [xi, split](Tape<T>& t, std::size_t self) {
        if (!t.needs_grad(xi)) return;
        auto g = t.upstream(self);
        auto y = t.value(self);
        auto gx = t.grad_buffer(xi);
        for (std::size_t o = 0; o < split.outer; ++o) {
            for (std::size_t in = 0; in < split.inner; ++in) {
                const std::size_t base = o * split.len * split.inner + in;
                double dotp = 0;
                for (std::size_t a = 0; a < split.len; ++a) {
                    const auto idx = base + a * split.inner;
                    dotp += double(g[idx]) * double(y[idx]);
                }
                for (std::size_t a = 0; a < split.len; ++a) {
                    const auto idx = base + a * split.inner;
                    gx[idx] += static_cast<T>(double(y[idx]) * (double(g[idx]) - dotp));
                }
            }
        }
    });
}

/// Concatenation along `axis`; all other dimensions must agree.
template <class T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& first = parts[0].shape();
    detail::split_axis(first, axis, "concat");
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        detail::require_same_tape(parts[0], p, "concat");
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
        if (!ok) throw shape_error("concat: shape mismatch " + to_string(first) + " vs " + to_string(s));
        out_shape[axis] += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
    const std::size_t out_len = out_shape[axis];

    std::vector<T> out(numel(out_shape));
    std::vector<std::size_t> ids, lens;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t len = p.shape()[axis];
        auto v = p.value();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(v.data() + o * len * inner, len * inner, out.data() + (o * out_len + offset) * inner);
        }
        offset += len;
        ids.push_back(p.id);
        lens.push_back(len);
    }
    return parts[0].tape->record(OpKind::concat, ids, out_shape, std::move(out),
                                 [ids, lens, outer, inner, out_len](Tape<T>& t, std::size_t self) {
                                     auto g = t.upstream(self);
                                     std::size_t offset = 0;
                                     for (std::size_t k = 0; k < ids.size(); ++k) {
                                         const std::size_t len = lens[k];
                                         if (t.needs_grad(ids[k])) {
                                             auto gp = t.grad_buffer(ids[k]);
                                             for (std::size_t o = 0; o < outer; ++o) {
                                                 const T* src = g.data() + (o * out_len + offset) * inner;
                                                 T* dst = gp.data() + o * len * inner;
                                                 for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                                             }
                                         }
                                         offset += len;
                                     }
                                 });
}

template <class T>
Var<T> concat(std::initializer_list<Var<T>> parts, std::size_t axis) {
    return concat(std::span<const Var<T>>(parts.begin(), parts.size()), axis);
}

/// Elements [begin, end) along `axis`.
template <class T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t begin, std::size_t end) {
    const auto split = detail::split_axis(x.shape(), axis, "slice");
    if (begin > end || end > split.len) {
        throw shape_error("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                          ") out of bounds for " + to_string(x.shape()));
    }
    Shape out_shape = x.shape();
    out_shape[axis] = end - begin;
    const std::size_t len = end - begin;
    auto xv = x.value();
    std::vector<T> out(numel(out_shape));
    for (std::size_t o = 0; o < split.outer; ++o) {
        std::copy_n(xv.data() + (o * split.len + begin) * split.inner, len * split.inner,
                    out.data() + o * len * split.inner);
    }
    const auto xi = x.id;
    return x.tape->record(OpKind::slice, {xi}, out_shape, std::move(out),
                          [xi, split, begin, len](Tape<T>& t, std::size_t self) {
                              if (!t.needs_grad(xi)) return;
                              auto g = t.upstream(self);
                              auto gx = t.grad_buffer(xi);
                              for (std::size_t o = 0; o < split.outer; ++o) {
                                  const T* src = g.data() + o * len * split.inner;
                                  T* dst = gx.data() + (o * split.len + begin) * split.inner;
                                  for (std::size_t i = 0; i < len * split.inner; ++i) dst[i] += src[i];
                              }
                          });
}

/// Row gather from table [V x d]; backward scatter-adds into the gathered rows.
template <class T>
Var<T> embedding_lookup(Var<T> table, std::span<const std::int32_t> ids) {
    const auto& s = table.shape();
    if (s.size() != 2) throw shape_error("embedding_lookup: table must be 2-D, got " + to_string(s));
    const std::size_t vocab = s[0], d = s[1];
    std::vector<std::int32_t> rows(ids.begin(), ids.end());
    auto tv = table.value();
    std::vector<T> out(rows.size() * d);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || static_cast<std::size_t>(rows[r]) >= vocab) {
            throw std::out_of_range("embedding_lookup: out-of-vocabulary id " + std::to_string(rows[r]) +
                                    " (vocabulary size " + std::to_string(vocab) + ")");
        }
        std::copy_n(tv.data() + std::size_t(rows[r]) * d, d, out.data() + r * d);
    }
    const auto ti = table.id;
    const std::size_t l = rows.size();
    return table.tape->record(OpKind::embedding, {ti}, Shape{l, d}, std::move(out),
                              [ti, rows = std::move(rows), d](Tape<T>& t, std::size_t self) {
                                  if (!t.needs_grad(ti)) return;
                                  auto g = t.upstream(self);
                                  auto gt = t.grad_buffer(ti);
                                  for (std::size_t r = 0; r < rows.size(); ++r) {
                                      T* dst = gt.data() + std::size_t(rows[r]) * d;
                                      for (std::size_t j = 0; j < d; ++j) dst[j] += g[r * d + j];
                                  }
                              });
}

template <class T>
Var<T> embedding_lookup(Var<T> table, const std::vector<std::int32_t>& ids) {
    return embedding_lookup(table, std::span<const std::int32_t>(ids));
}

/// Sum of all elements, shape {1}.
template <class T>
Var<T> sum(Var<T> x) {
    double s = 0;
    for (auto v : x.value()) s += double(v);
    const auto xi = x.id;
    return x.tape->record(OpKind::sum, {xi}, Shape{1}, {static_cast<T>(s)}, [xi](Tape<T>& t, std::size_t self) {
        if (!t.needs_grad(xi)) return;
        const T g = t.upstream(self)[0];
        for (auto& gx : t.grad_buffer(xi)) gx += g;
    });
}

/// Mean of all elements, shape {1}.
template <class T>
Var<T> mean(Var<T> x) {
    const std::size_t n = x.numel();
    if (n == 0) throw shape_error("mean: empty tensor");
    double s = 0;
    for (auto v : x.value()) s += double(v);
    const auto xi = x.id;
    return x.tape->record(OpKind::mean, {xi}, Shape{1}, {static_cast<T>(s / double(n))},
                          [xi, n](Tape<T>& t, std::size_t self) {
                              if (!t.needs_grad(xi)) return;
                              const double g = double(t.upstream(self)[0]) / double(n);
                              for (auto& gx : t.grad_buffer(xi)) gx += static_cast<T>(g);
                          });
}

/// Layout op: 2-D transpose.
template <class T>
Var<T> transpose(Var<T> x) {
    const auto& s = x.shape();
    if (s.size() != 2) throw shape_error("transpose: expected 2-D, got " + to_string(s));
    const std::size_t r = s[0], c = s[1];
    auto xv = x.value();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
    const auto xi = x.id;
    return x.tape->record(OpKind::transpose, {xi}, Shape{c, r}, std::move(out), [xi, r, c](Tape<T>& t, std::size_t self) {
        if (!t.needs_grad(xi)) return;
        auto g = t.upstream(self);
        auto gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
    });
}

/// Layout op: same values, new shape.
template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw shape_error("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    auto xv = x.value();
    const auto xi = x.id;
    return x.tape->record(OpKind::reshape, {xi}, std::move(shape), std::vector<T>(xv.begin(), xv.end()),
                          [xi](Tape<T>& t, std::size_t self) {
                              if (!t.needs_grad(xi)) return;
                              auto g = t.upstream(self);
                              auto gx = t.grad_buffer(xi);
                              for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                          });
}

enum class ElementwiseKind : int { add = 0, mul, sigmoid, tanh, relu, scale };

/// Dispatches an elementwise primitive by kind. Binary kinds take two inputs,
/// unary kinds one; `factor` is used only by `scale`.
template <class T>
Var<T> elementwise(ElementwiseKind kind, std::span<const Var<T>> inputs, double factor = 1.0) {
    auto arity = [&](std::size_t want) {
        if (inputs.size() != want) {
            throw std::invalid_argument("elementwise: expected " + std::to_string(want) + " inputs, got " +
                                        std::to_string(inputs.size()));
        }
    };
    switch (kind) {
    case ElementwiseKind::add: arity(2); return add(inputs[0], inputs[1]);
    case ElementwiseKind::mul: arity(2); return mul(inputs[0], inputs[1]);
    case ElementwiseKind::sigmoid: arity(1); return sigmoid(inputs[0]);
    case ElementwiseKind::tanh: arity(1); return tanh(inputs[0]);
    case ElementwiseKind::relu: arity(1); return relu(inputs[0]);
    case ElementwiseKind::scale: arity(1); return scale(inputs[0], factor);
    }
    throw std::invalid_argument("elementwise: unknown kind " + std::to_string(static_cast<int>(kind)));
}

template <class T>
Var<T> elementwise(ElementwiseKind kind, std::initializer_list<Var<T>> inputs, double factor = 1.0) {
    return elementwise(kind, std::span<const Var<T>>(inputs.begin(), inputs.size()), factor);
}

} // namespace xvqa::ad
