#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "xvqa/autodiff/parameters.hpp"
#include "xvqa/autodiff/tape.hpp"

namespace xvqa::ad {

struct GradCheckEntry {
    std::string name;
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_relative_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Relative error with a floor on the denominator so that two gradients that
/// are both ~0 compare as equal.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

/// Compares reverse-mode gradients of `build` against central finite
/// differences (f(θ+h) − f(θ−h)) / 2h, all in 64-bit.
///
/// `build(tape, params)` must record a scalar loss on `tape` using only
/// `params` as differentiable leaves, and must be deterministic.
template <class Build>
GradCheckReport check_gradients(Build&& build, ParameterStore<double>& params, double h, double tol) {
    if (!(h > 0.0)) throw std::invalid_argument("check_gradients: step h must be positive");
    if (!(tol > 0.0)) throw std::invalid_argument("check_gradients: tolerance must be positive");

    auto forward = [&]() {
        Tape<double> tape(false);
        return build(tape, params).item();
    };

    const double f0 = forward();
    const double f1 = forward();
    if (std::memcmp(&f0, &f1, sizeof f0) != 0) {
        throw numerical_error("check_gradients: two forward passes disagree (non-deterministic f)");
    }

    params.zero_grad();
    {
        Tape<double> tape(true);
        auto loss = build(tape, params);
        tape.backward(loss);
    }

    GradCheckReport report;
    report.tolerance = tol;
    for (auto& [name, t] : params) {
        GradCheckEntry entry;
        entry.name = name;
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto values = t.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double fp = forward();
            values[i] = saved - h;
            const double fm = forward();
            values[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic.empty() ? 0.0 : analytic[i];
            const double err = relative_error(a, numeric);
            if (i == 0 || err > entry.max_relative_error || std::isnan(err)) {
                entry.max_relative_error = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
                entry.worst_index = i;
                entry.analytic = a;
                entry.numeric = numeric;
            }
        }
        report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
        report.entries.push_back(std::move(entry));
    }
    params.zero_grad();
    report.passed = report.max_relative_error <= tol && std::isfinite(report.max_relative_error);
    return report;
}

} // namespace xvqa::ad
