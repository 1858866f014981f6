#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "xvqa/autodiff.hpp"
#include "xvqa/model/backbone.hpp"
#include "xvqa/model/decoder.hpp"
#include "xvqa/model/model.hpp"

// Finite-difference checks over every primitive and the end-to-end model,
// shared by the grad-check subcommand and the test suites.

namespace xvqa::verify {

using ad::ParameterStore;
using ad::Shape;
using ad::Tape;
using ad::Var;

struct SuiteCase {
    std::string name;
    ad::GradCheckReport report;
};

namespace detail {

inline ad::basic_tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    ad::basic_tensor<double> t(std::move(s));
    for (auto& v : t.values()) v = u(rng);
    return t;
}

/// Values bounded away from 0 so relu's kink is never straddled by ±h.
inline ad::basic_tensor<double> away_from_zero(Shape s, std::mt19937_64& rng) {
    auto t = random_tensor(std::move(s), rng);
    for (auto& v : t.values())
        if (std::abs(v) < 0.1) v = v < 0 ? v - 0.1 : v + 0.1;
    return t;
}

/// Contracts a tensor with fixed random weights so every output element
/// carries a distinct upstream gradient.
inline Var<double> probe(Tape<double>& tape, Var<double> y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto w = random_tensor(y.shape(), rng);
    return ad::sum(ad::mul(y, tape.constant(w)));
}

} // namespace detail

using CaseBuilder = std::function<Var<double>(Tape<double>&, ParameterStore<double>&)>;

/// One gradient check per primitive (all tensors at most 4x5).
inline std::vector<SuiteCase> primitive_gradient_suite(std::uint64_t seed, double tol = 1e-4, double h = 1e-5) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dim(1, 4), dim5(1, 5);
    const std::size_t m = dim(rng), k = dim5(rng), n = dim5(rng);
    const std::uint64_t ps = seed * 7919 + 17;
    std::vector<SuiteCase> out;

    auto run = [&](const std::string& name, std::vector<std::pair<std::string, ad::basic_tensor<double>>> inputs,
                   CaseBuilder build) {
        ParameterStore<double> p;
        for (auto& [pname, t] : inputs) p.add(pname, std::move(t));
        out.push_back({name, ad::check_gradients(build, p, h, tol)});
    };
    auto get = [](Tape<double>& t, ParameterStore<double>& p, const char* name) { return t.param(p.get(name)); };

    run("matmul", {{"a", detail::random_tensor({m, k}, rng)}, {"b", detail::random_tensor({k, n}, rng)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::matmul(get(t, p, "a"), get(t, p, "b")), ps); });
    run("add", {{"a", detail::random_tensor({m, n}, rng)}, {"b", detail::random_tensor({m, n}, rng)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::add(get(t, p, "a"), get(t, p, "b")), ps); });
    run("mul", {{"a", detail::random_tensor({m, n}, rng)}, {"b", detail::random_tensor({m, n}, rng)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::mul(get(t, p, "a"), get(t, p, "b")), ps); });
    run("scale", {{"a", detail::random_tensor({m, n}, rng)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::scale(get(t, p, "a"), -1.7), ps); });
    run("sigmoid", {{"a", detail::random_tensor({m, n}, rng, -3, 3)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::sigmoid(get(t, p, "a")), ps); });
    run("tanh", {{"a", detail::random_tensor({m, n}, rng, -3, 3)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::tanh(get(t, p, "a")), ps); });
    run("relu", {{"a", detail::away_from_zero({m, n}, rng)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::relu(get(t, p, "a")), ps); });
    run("softmax_axis0", {{"a", detail::random_tensor({m, n}, rng, -2, 2)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::softmax(get(t, p, "a"), 0), ps); });
    run("softmax_axis1", {{"a", detail::random_tensor({m, n}, rng, -2, 2)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::softmax(get(t, p, "a"), 1), ps); });
    run("log", {{"a", detail::random_tensor({m, n}, rng, 0.2, 3.0)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::log(get(t, p, "a")), ps); });
    run("concat_axis0", {{"a", detail::random_tensor({m, n}, rng)}, {"b", detail::random_tensor({dim(rng), n}, rng)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::concat({get(t, p, "a"), get(t, p, "b")}, 0), ps); });
    run("concat_axis1", {{"a", detail::random_tensor({m, 2}, rng)}, {"b", detail::random_tensor({m, 3}, rng)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::concat({get(t, p, "a"), get(t, p, "b")}, 1), ps); });
    run("slice", {{"a", detail::random_tensor({4, 5}, rng)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::slice(ad::slice(get(t, p, "a"), 0, 1, 3), 1, 2, 5), ps); });
    {
        std::uniform_int_distribution<std::int32_t> id(0, 3);
        std::vector<std::int32_t> ids = {id(rng), id(rng), id(rng), id(rng), id(rng)};  // repeats exercise accumulation
        run("embedding_lookup", {{"table", detail::random_tensor({4, n}, rng)}}, [&, ids](auto& t, auto& p) {
            return detail::probe(t, ad::embedding_lookup(get(t, p, "table"), ids), ps);
        });
    }
    run("sum", {{"a", detail::random_tensor({m, n}, rng)}},
        [&](auto& t, auto& p) { return ad::scale(ad::sum(ad::mul(get(t, p, "a"), get(t, p, "a"))), 0.5); });
    run("mean", {{"a", detail::random_tensor({m, n}, rng)}},
        [&](auto& t, auto& p) { return ad::mean(ad::mul(get(t, p, "a"), get(t, p, "a"))); });
    run("transpose", {{"a", detail::random_tensor({m, n}, rng)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::transpose(get(t, p, "a")), ps); });
    run("reshape", {{"a", detail::random_tensor({2, 6}, rng)}},
        [&](auto& t, auto& p) { return detail::probe(t, ad::reshape(get(t, p, "a"), Shape{3, 4}), ps); });
    return out;
}

/// Example for the end-to-end check: 2 RoIs, a 3-token question.
struct TinyExample {
    model::EncodedExample example;
    model::ModelConfig config;
};

inline TinyExample tiny_example(std::uint64_t seed, model::DecoderKind kind, std::size_t d_h = 8) {
    std::mt19937_64 rng(seed);
    TinyExample t;
    const std::size_t vocab = 12, answers = 3, d_in = 5;
    t.config.backbone = {d_in, d_h, vocab, answers, 1};
    t.config.decoder.kind = kind;
    t.config.decoder.model_dim = d_h;
    t.config.decoder.vocab = vocab;
    t.config.decoder.heads = 2;
    t.config.decoder.max_length = 6;
    std::uniform_int_distribution<std::int32_t> word(4, std::int32_t(vocab) - 1);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    auto& e = t.example;
    e.id = "tiny-" + std::to_string(seed);
    e.features = ad::Tensor(Shape{2, d_in});
    for (auto& v : e.features.values()) v = u(rng);
    e.image_predicates = {word(rng), word(rng)};
    e.question = {word(rng), word(rng), word(rng)};
    e.question_predicates = {e.question[2]};
    e.explanation = {word(rng), word(rng), word(rng), data::Vocabulary::eos};
    e.answer_label = std::int32_t(seed % answers);
    return t;
}

/// Gradient check of the joint loss through backbone and decoder, in double.
inline SuiteCase end_to_end_gradient_case(std::uint64_t seed, model::DecoderKind kind, double tol = 1e-4,
                                          double h = 1e-5, double alpha = 0.5) {
    auto tiny = tiny_example(seed, kind);
    ParameterStore<double> p;
    std::mt19937_64 rng(seed + 1000);
    model::init_backbone(p, tiny.config.backbone, rng);
    model::init_decoder(p, tiny.config.decoder, rng);
    // Learned zero-initialized biases sit exactly on relu's kink; jitter them.
    std::uniform_real_distribution<double> jitter(-0.3, 0.3);
    for (auto& [name, t] : p)
        for (auto& v : t.values())
            if (v == 0.0) v = jitter(rng);
    const auto cfg = tiny.config;
    const auto ex = tiny.example;
    auto build = [cfg, ex, alpha](Tape<double>& tape, ParameterStore<double>& params) {
        std::vector<double> f(ex.features.values().begin(), ex.features.values().end());
        auto features = tape.constant(Shape{ex.features.rows(), ex.features.cols()}, std::move(f));
        auto bb = model::backbone_forward(tape, params, features, ex.image_predicates, ex.question, ex.question_predicates);
        auto dec = model::decode_train(tape, params, cfg.decoder, bb.joint, ex.explanation);
        return model::joint_loss(bb.answer.logits, ex.answer_label, dec.logits,
                                 std::span<const model::TokenId>(dec.targets), alpha)
            .total;
    };
    return {std::string("end_to_end_") + model::to_string(kind), ad::check_gradients(build, p, h, tol)};
}

} // namespace xvqa::verify
