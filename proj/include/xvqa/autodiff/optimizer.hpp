#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "xvqa/autodiff/parameters.hpp"

namespace xvqa::ad {

enum class OptimizerKind { sgd, adam };

struct OptimizerOptions {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// SGD or bias-corrected Adam. Moment buffers are kept in double and keyed
/// by parameter name.
class Optimizer {
public:
    explicit Optimizer(OptimizerOptions options = {}) : opt_(options) {
        if (!(opt_.learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning rate must be positive");
    }

    const OptimizerOptions& options() const noexcept { return opt_; }
    std::uint64_t step_count() const noexcept { return steps_; }

    /// Applies one update from the current gradients, then zeroes them.
    template <std::floating_point T>
    void step(ParameterStore<T>& params) {
        for (const auto& [name, t] : params) {
            if (t.requires_grad() && t.grad().size() != t.numel()) {
                throw std::logic_error("optimizer_step: parameter '" + name + "' has no gradient");
            }
        }
        ++steps_;
        const double lr = opt_.learning_rate;
        const double c1 = 1.0 - std::pow(opt_.beta1, double(steps_));
        const double c2 = 1.0 - std::pow(opt_.beta2, double(steps_));
        for (auto& [name, t] : params) {
            if (!t.requires_grad()) continue;
            auto v = t.values();
            auto g = t.grad();
            if (opt_.kind == OptimizerKind::sgd) {
                for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(double(v[i]) - lr * double(g[i]));
            } else {
                auto& state = moments_[name];
                if (state.m.size() != v.size()) {
                    state.m.assign(v.size(), 0.0);
                    state.v.assign(v.size(), 0.0);
                }
                for (std::size_t i = 0; i < v.size(); ++i) {
                    const double gi = g[i];
                    state.m[i] = opt_.beta1 * state.m[i] + (1.0 - opt_.beta1) * gi;
                    state.v[i] = opt_.beta2 * state.v[i] + (1.0 - opt_.beta2) * gi * gi;
                    const double mh = state.m[i] / c1;
                    const double vh = state.v[i] / c2;
                    v[i] = static_cast<T>(double(v[i]) - lr * mh / (std::sqrt(vh) + opt_.epsilon));
                }
            }
            t.zero_grad();
        }
    }

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };

    OptimizerOptions opt_;
    std::uint64_t steps_ = 0;
    std::map<std::string, Moments> moments_;
};

} // namespace xvqa::ad
