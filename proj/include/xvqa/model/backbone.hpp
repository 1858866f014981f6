#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "xvqa/autodiff.hpp"
#include "xvqa/model/config.hpp"

// Coarse-to-fine reasoning backbone:
//   question GRU -> information filter (IF) -> coarse/fine bilinear attention
//   (MM) -> gated semantic fusion (SR) -> answer MLP.

namespace xvqa::model {

using ad::ParameterStore;
using ad::Shape;
using ad::Tape;
using ad::Var;

template <class T>
void init_backbone(ParameterStore<T>& p, const BackboneConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const std::size_t d = cfg.d_h, din = cfg.d_in;
    using namespace ad::init;
    p.add("backbone/word_embedding", normal<T>(Shape{cfg.word_vocab, d}, 0.1, rng));
    p.add("backbone/gru/w_x", xavier<T>(d, 3 * d, rng));
    p.add("backbone/gru/w_h", xavier<T>(d, 3 * d, rng));
    p.add("backbone/gru/b_x", zeros<T>(Shape{1, 3 * d}));
    p.add("backbone/gru/b_h", zeros<T>(Shape{1, 3 * d}));
    p.add("backbone/if/w_q", xavier<T>(d, d, rng));
    p.add("backbone/if/w_v", xavier<T>(din, d, rng));
    p.add("backbone/if/w", xavier<T>(d, 1, rng));
    p.add("backbone/image_predicate_proj", xavier<T>(d, din, rng));
    p.add("backbone/null_image_predicate", normal<T>(Shape{1, d}, 0.1, rng));
    p.add("backbone/null_question_predicate", normal<T>(Shape{1, d}, 0.1, rng));
    for (const char* branch : {"coarse", "fine"}) {
        const std::string pre = std::string("backbone/") + branch;
        p.add(pre + "/u", xavier<T>(din, d, rng));
        p.add(pre + "/v", xavier<T>(d, d, rng));
        p.add(pre + "/w_out", xavier<T>(d, d, rng));
        p.add(pre + "/b_out", zeros<T>(Shape{1, d}));
    }
    p.add("backbone/sr/w_g", xavier<T>(2 * d, d, rng));
    p.add("backbone/answer/w1", xavier<T>(d, d, rng));
    p.add("backbone/answer/b1", zeros<T>(Shape{1, d}));
    p.add("backbone/answer/w2", xavier<T>(d, cfg.answer_count, rng));
    p.add("backbone/answer/b2", zeros<T>(Shape{1, cfg.answer_count}));
}

template <class T>
struct QuestionEncoding {
    Var<T> sequence;  ///< f_Q, [l x d_h]
    Var<T> summary;   ///< final hidden state, [1 x d_h]
};

/// Single-layer GRU over embedded question tokens, h_0 = 0:
///   r = σ(x W_xr + b_xr + h W_hr + b_hr)
///   z = σ(x W_xz + b_xz + h W_hz + b_hz)
///   n = tanh(x W_xn + b_xn + r ∘ (h W_hn + b_hn))
///   h' = (1 − z) ∘ n + z ∘ h
template <class T>
QuestionEncoding<T> encode_question(Tape<T>& tape, ParameterStore<T>& p, std::span<const std::int32_t> tokens) {
    if (tokens.empty()) throw std::invalid_argument("encode_question: empty question");
    auto emb = ad::embedding_lookup(tape.param(p.get("backbone/word_embedding")), tokens);
    auto w_h = tape.param(p.get("backbone/gru/w_h"));
    auto b_h = tape.param(p.get("backbone/gru/b_h"));
    const std::size_t d = w_h.rows();
    auto gx_all = ad::affine(emb, tape.param(p.get("backbone/gru/w_x")), tape.param(p.get("backbone/gru/b_x")));
    Var<T> h = tape.filled(Shape{1, d}, T(0));
    std::vector<Var<T>> states;
    states.reserve(tokens.size());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        auto gx = ad::slice(gx_all, 0, t, t + 1);
        auto gh = ad::add(ad::matmul(h, w_h), b_h);
        auto r = ad::sigmoid(ad::add(ad::slice(gx, 1, 0, d), ad::slice(gh, 1, 0, d)));
        auto z = ad::sigmoid(ad::add(ad::slice(gx, 1, d, 2 * d), ad::slice(gh, 1, d, 2 * d)));
        auto n = ad::tanh(ad::add(ad::slice(gx, 1, 2 * d, 3 * d), ad::mul(r, ad::slice(gh, 1, 2 * d, 3 * d))));
        h = ad::add(ad::mul(ad::one_minus(z), n), ad::mul(z, h));
        states.push_back(h);
    }
    return {ad::concat(std::span<const Var<T>>(states), 0), h};
}

template <class T>
struct FilterResult {
    Var<T> filtered;  ///< f̃_I, [R x d_in]
    Var<T> gates;     ///< [R x 1], each in (0, 1)
};

/// Per-RoI relevance gate g_r = σ(wᵀ tanh(W_q q̄ + W_v f_r)); f̃_r = g_r · f_r.
template <class T>
FilterResult<T> information_filter(Tape<T>& tape, ParameterStore<T>& p, Var<T> features, Var<T> question_summary) {
    const std::size_t r = features.rows(), din = features.cols();
    if (r == 0) throw std::invalid_argument("information_filter: no RoIs");
    auto q = ad::repeat_rows(ad::matmul(question_summary, tape.param(p.get("backbone/if/w_q"))), r);
    auto v = ad::matmul(features, tape.param(p.get("backbone/if/w_v")));
    auto scores = ad::matmul(ad::tanh(ad::add(q, v)), tape.param(p.get("backbone/if/w")));
    auto gates = ad::sigmoid(scores);
    return {ad::mul(features, ad::repeat_cols(gates, din)), gates};
}

template <class T>
struct AttentionResult {
    Var<T> joint;      ///< [1 x d_h]
    Var<T> attention;  ///< α, [r x t], sums to 1
};

/// Bilinear attention with one glimpse:
///   A_ij = (U x_i)ᵀ (V y_j), α = softmax over all r·t pairs,
///   joint = W_out (Σ_ij α_ij (U x_i) ∘ (V y_j)) + b_out.
/// `prefix` selects the parameter group (e.g. "backbone/coarse").
template <class T>
AttentionResult<T> bilinear_attend(Tape<T>& tape, ParameterStore<T>& p, const std::string& prefix, Var<T> x, Var<T> y) {
    const std::size_t r = x.rows(), t = y.rows();
    if (r == 0 || t == 0) throw std::invalid_argument("bilinear_attend: empty input");
    auto ux = ad::matmul(x, tape.param(p.get(prefix + "/u")));  // r x k
    auto vy = ad::matmul(y, tape.param(p.get(prefix + "/v")));  // t x k
    auto logits = ad::matmul(ux, ad::transpose(vy));            // r x t
    auto alpha = ad::reshape(ad::softmax(ad::reshape(logits, Shape{1, r * t}), 1), Shape{r, t});
    // Σ_ij α_ij ux_i ∘ vy_j = Σ_i ux_i ∘ (Σ_j α_ij vy_j)
    auto mixed = ad::matmul(alpha, vy);
    auto pooled = ad::matmul(tape.filled(Shape{1, r}, T(1)), ad::mul(ux, mixed));
    auto joint = ad::affine(pooled, tape.param(p.get(prefix + "/w_out")), tape.param(p.get(prefix + "/b_out")));
    return {joint, alpha};
}

template <class T>
struct MultimodalResult {
    AttentionResult<T> coarse;
    AttentionResult<T> fine;
};

/// Coarse branch attends over (features ++ projected image predicates) x
/// (question states ++ question predicates); fine branch attends over the
/// filtered features x question states. Empty predicate lists are replaced by
/// a learned null row.
template <class T>
MultimodalResult<T> multimodal(Tape<T>& tape, ParameterStore<T>& p, Var<T> features,
                               std::span<const std::int32_t> image_predicates, Var<T> question_states,
                               std::span<const std::int32_t> question_predicates, Var<T> filtered) {
    auto table = tape.param(p.get("backbone/word_embedding"));
    auto pi = image_predicates.empty() ? tape.param(p.get("backbone/null_image_predicate"))
                                       : ad::embedding_lookup(table, image_predicates);
    auto pq = question_predicates.empty() ? tape.param(p.get("backbone/null_question_predicate"))
                                          : ad::embedding_lookup(table, question_predicates);
    auto pi_proj = ad::matmul(pi, tape.param(p.get("backbone/image_predicate_proj")));
    auto x = ad::concat({features, pi_proj}, 0);
    auto y = ad::concat({question_states, pq}, 0);
    return {bilinear_attend(tape, p, "backbone/coarse", x, y),
            bilinear_attend(tape, p, "backbone/fine", filtered, question_states)};
}

/// g = σ(W_g [j_coarse ++ j_fine]); j = g ∘ j_coarse + (1 − g) ∘ j_fine.
template <class T>
Var<T> semantic_reason(Tape<T>& tape, ParameterStore<T>& p, Var<T> coarse, Var<T> fine) {
    auto g = ad::sigmoid(ad::matmul(ad::concat({coarse, fine}, 1), tape.param(p.get("backbone/sr/w_g"))));
    return ad::add(ad::mul(g, coarse), ad::mul(ad::one_minus(g), fine));
}

/// Index of the largest value; ties go to the lowest index.
template <class T>
std::int32_t argmax(std::span<const T> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return std::int32_t(best);
}

template <class T>
struct AnswerPrediction {
    Var<T> logits;  ///< [1 x |A|]
    std::int32_t label = 0;
};

/// One-hidden-layer ReLU MLP over the joint embedding.
template <class T>
AnswerPrediction<T> predict_answer(Tape<T>& tape, ParameterStore<T>& p, Var<T> joint) {
    auto h = ad::relu(ad::affine(joint, tape.param(p.get("backbone/answer/w1")), tape.param(p.get("backbone/answer/b1"))));
    auto logits = ad::affine(h, tape.param(p.get("backbone/answer/w2")), tape.param(p.get("backbone/answer/b2")));
    return {logits, argmax(logits.value())};
}

template <class T>
struct BackboneOutput {
    QuestionEncoding<T> question;
    FilterResult<T> filter;
    MultimodalResult<T> mm;
    Var<T> joint;
    AnswerPrediction<T> answer;
};

/// encode -> IF -> MM -> SR -> answer head.
template <class T>
BackboneOutput<T> backbone_forward(Tape<T>& tape, ParameterStore<T>& p, Var<T> features,
                                   std::span<const std::int32_t> image_predicates,
                                   std::span<const std::int32_t> question_tokens,
                                   std::span<const std::int32_t> question_predicates) {
    BackboneOutput<T> out;
    out.question = encode_question(tape, p, question_tokens);
    out.filter = information_filter(tape, p, features, out.question.summary);
    out.mm = multimodal(tape, p, features, image_predicates, out.question.sequence, question_predicates,
                        out.filter.filtered);
    out.joint = semantic_reason(tape, p, out.mm.coarse.joint, out.mm.fine.joint);
    out.answer = predict_answer(tape, p, out.joint);
    return out;
}

} // namespace xvqa::model
