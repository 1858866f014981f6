#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "xvqa/autodiff.hpp"
#include "xvqa/data/types.hpp"
#include "xvqa/data/vocabulary.hpp"
#include "xvqa/model/backbone.hpp"
#include "xvqa/model/config.hpp"
#include "xvqa/model/decoder.hpp"

namespace xvqa::model {

/// Backbone + decoder parameters together with the vocabulary they index.
template <class T>
struct Model {
    ModelConfig config;
    data::Vocabulary vocab;
    ParameterStore<T> params;
};

/// Builds a model sized from the vocabulary. `d_h` sets both the joint
/// dimension and the decoder model dimension.
template <class T>
Model<T> make_model(const data::Vocabulary& vocab, std::size_t d_in, std::size_t d_h, DecoderKind kind,
                    std::uint64_t seed, DecoderConfig decoder = {}) {
    Model<T> m;
    m.vocab = vocab;
    m.config.backbone.d_in = d_in;
    m.config.backbone.d_h = d_h;
    m.config.backbone.word_vocab = vocab.size();
    m.config.backbone.answer_count = vocab.answer_count();
    m.config.decoder = decoder;
    m.config.decoder.kind = kind;
    m.config.decoder.model_dim = d_h;
    m.config.decoder.vocab = vocab.size();
    m.config.validate();
    std::mt19937_64 rng(seed);
    init_backbone(m.params, m.config.backbone, rng);
    init_decoder(m.params, m.config.decoder, rng);
    return m;
}

/// Parameters whose names start with `prefix`.
template <class T>
std::vector<std::string> parameter_names(const ParameterStore<T>& p, const std::string& prefix) {
    std::vector<std::string> out;
    for (const auto& [name, _] : p)
        if (name.rfind(prefix, 0) == 0) out.push_back(name);
    return out;
}

/// A dataset example mapped to vocabulary ids.
struct EncodedExample {
    std::string id;
    ad::Tensor features;
    std::vector<TokenId> image_predicates;
    std::vector<TokenId> question;
    std::vector<TokenId> question_predicates;
    std::vector<TokenId> explanation;  ///< ends with EOS
    std::int32_t answer_label = -1;    ///< -1 when the gold answer is outside A
};

inline EncodedExample encode_example(const data::VqaExample& ex, const data::Vocabulary& vocab) {
    EncodedExample e;
    e.id = ex.id;
    e.features = ex.image_features;
    e.image_predicates = vocab.encode(ex.image_predicates);
    e.question = vocab.encode(ex.question_tokens);
    e.question_predicates = vocab.encode(ex.question_predicates);
    e.explanation = vocab.encode(ex.explanation_tokens);
    // Highest-count annotated answer that survived the frequency filter.
    int best_count = -1;
    for (const auto& a : ex.answers) {
        const auto label = vocab.answer_label(a.answer);
        if (label >= 0 && a.count > best_count) {
            best_count = a.count;
            e.answer_label = label;
        }
    }
    return e;
}

inline std::vector<EncodedExample> encode_dataset(const data::Dataset& ds, const data::Vocabulary& vocab) {
    std::vector<EncodedExample> out;
    out.reserve(ds.size());
    for (const auto& ex : ds.examples) out.push_back(encode_example(ex, vocab));
    return out;
}

template <class T>
Var<T> feature_constant(Tape<T>& tape, const ad::Tensor& f) {
    std::vector<T> v(f.values().begin(), f.values().end());
    return tape.constant(Shape{f.rows(), f.cols()}, std::move(v));
}

template <class T>
struct ForwardResult {
    BackboneOutput<T> backbone;
    DecodeTrainResult<T> explanation;
};

/// Full teacher-forced forward pass for one example.
template <class T>
ForwardResult<T> forward_example(Tape<T>& tape, Model<T>& m, const EncodedExample& ex) {
    if (ex.features.cols() != m.config.backbone.d_in) {
        throw shape_error("example '" + ex.id + "' feature dim " + std::to_string(ex.features.cols()) +
                          " does not match model d_in " + std::to_string(m.config.backbone.d_in));
    }
    ForwardResult<T> out;
    out.backbone = backbone_forward(tape, m.params, feature_constant(tape, ex.features), ex.image_predicates,
                                    ex.question, ex.question_predicates);
    out.explanation = decode_train(tape, m.params, m.config.decoder, out.backbone.joint, ex.explanation);
    return out;
}

template <class T>
struct JointLoss {
    Var<T> total;
    Var<T> answer;
    Var<T> explanation;
};

/// L = α L_ans + (1 − α) L_expl with L_ans = −log softmax(answer_logits)[gold].
/// A negative gold label (answer filtered out of A) contributes L_ans = 0.
template <class T>
JointLoss<T> joint_loss(Var<T> answer_logits, std::int32_t gold_label, Var<T> expl_logits,
                        std::span<const TokenId> gold_expl, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("joint_loss: alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
    JointLoss<T> out;
    out.answer = gold_label >= 0 ? ad::cross_entropy(answer_logits, std::size_t(gold_label))
                                 : ad::scale(ad::sum(answer_logits), 0.0);
    out.explanation = explanation_loss(expl_logits, gold_expl);
    out.total = ad::add(ad::scale(out.answer, alpha), ad::scale(out.explanation, 1.0 - alpha));
    return out;
}

} // namespace xvqa::model
