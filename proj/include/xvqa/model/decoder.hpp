#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "xvqa/autodiff.hpp"
#include "xvqa/data/vocabulary.hpp"
#include "xvqa/model/backbone.hpp"
#include "xvqa/model/config.hpp"

// Explanation generators conditioned on the joint embedding j.
//
// LSTM: j is projected linearly to the initial (h, c) of every layer.
// Transformer: j is a length-1 cross-attention memory; token embeddings get
// sinusoidal positions and self-attention is strictly causal.
//
// Both consume j [1 x d] and teacher-forced inputs (BOS, w_1 .. w_{l-1}) and
// emit logits [l x |V|].

namespace xvqa::model {

using TokenId = std::int32_t;

inline std::string layer_name(const char* kind, std::size_t i) { return "decoder/" + std::string(kind) + std::to_string(i); }

template <class T>
void init_decoder(ParameterStore<T>& p, const DecoderConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const std::size_t d = cfg.model_dim, v = cfg.vocab;
    using namespace ad::init;
    p.add("decoder/embedding", normal<T>(Shape{v, d}, 0.1, rng));
    p.add("decoder/out/w", xavier<T>(d, v, rng));
    p.add("decoder/out/b", zeros<T>(Shape{1, v}));
    if (cfg.kind == DecoderKind::lstm) {
        for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
            const auto pre = layer_name("lstm", l);
            p.add(pre + "/w_x", xavier<T>(d, 4 * d, rng));
            p.add(pre + "/w_h", xavier<T>(d, 4 * d, rng));
            auto b = zeros<T>(Shape{1, 4 * d});
            for (std::size_t k = d; k < 2 * d; ++k) b[k] = T(1);  // forget gate
            p.add(pre + "/b", std::move(b));
            p.add(pre + "/init_h/w", xavier<T>(d, d, rng));
            p.add(pre + "/init_h/b", zeros<T>(Shape{1, d}));
            p.add(pre + "/init_c/w", xavier<T>(d, d, rng));
            p.add(pre + "/init_c/b", zeros<T>(Shape{1, d}));
        }
    } else {
        const std::size_t f = cfg.feed_forward_dim();
        for (std::size_t l = 0; l < cfg.transformer_layers; ++l) {
            const auto pre = layer_name("layer", l);
            for (const char* block : {"self", "cross"}) {
                for (const char* proj : {"q", "k", "v", "o"}) {
                    const auto name = pre + "/" + block + "_" + proj;
                    p.add(name + "/w", xavier<T>(d, d, rng));
                    p.add(name + "/b", zeros<T>(Shape{1, d}));
                }
            }
            p.add(pre + "/ffn/w1", xavier<T>(d, f, rng));
            p.add(pre + "/ffn/b1", zeros<T>(Shape{1, f}));
            p.add(pre + "/ffn/w2", xavier<T>(f, d, rng));
            p.add(pre + "/ffn/b2", zeros<T>(Shape{1, d}));
        }
    }
}

// ---------------------------------------------------------------------------
// LSTM

template <class T>
struct LstmState {
    std::vector<Var<T>> h;
    std::vector<Var<T>> c;
};

template <class T>
class LstmDecoder {
public:
    LstmDecoder(ParameterStore<T>& p, const DecoderConfig& cfg) : p_(p), cfg_(cfg) {}

    LstmState<T> initial_state(Tape<T>& tape, Var<T> joint) const {
        LstmState<T> s;
        for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
            const auto pre = layer_name("lstm", l);
            s.h.push_back(ad::affine(joint, tape.param(p_.get(pre + "/init_h/w")), tape.param(p_.get(pre + "/init_h/b"))));
            s.c.push_back(ad::affine(joint, tape.param(p_.get(pre + "/init_c/w")), tape.param(p_.get(pre + "/init_c/b"))));
        }
        return s;
    }

    /// Gate pre-activations are [i | f | g | o]:
    ///   c' = σ(f) ∘ c + σ(i) ∘ tanh(g),  h' = σ(o) ∘ tanh(c').
    /// `x_proj` is x W_x + b for this step.
    static std::pair<Var<T>, Var<T>> cell(Var<T> x_proj, Var<T> h, Var<T> c, Var<T> w_h, std::size_t d) {
        auto gates = ad::add(x_proj, ad::matmul(h, w_h));
        auto i = ad::sigmoid(ad::slice(gates, 1, 0, d));
        auto f = ad::sigmoid(ad::slice(gates, 1, d, 2 * d));
        auto g = ad::tanh(ad::slice(gates, 1, 2 * d, 3 * d));
        auto o = ad::sigmoid(ad::slice(gates, 1, 3 * d, 4 * d));
        auto c_next = ad::add(ad::mul(f, c), ad::mul(i, g));
        auto h_next = ad::mul(o, ad::tanh(c_next));
        return {h_next, c_next};
    }

    /// Layer-major pass over a whole input sequence.
    Var<T> teacher_forced(Tape<T>& tape, Var<T> joint, std::span<const TokenId> inputs) const {
        const std::size_t d = cfg_.model_dim, len = inputs.size();
        auto state = initial_state(tape, joint);
        Var<T> seq = ad::embedding_lookup(tape.param(p_.get("decoder/embedding")), inputs);
        for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
            const auto pre = layer_name("lstm", l);
            auto w_h = tape.param(p_.get(pre + "/w_h"));
            auto x_proj = ad::affine(seq, tape.param(p_.get(pre + "/w_x")), tape.param(p_.get(pre + "/b")));
            Var<T> h = state.h[l], c = state.c[l];
            std::vector<Var<T>> outs;
            outs.reserve(len);
            for (std::size_t t = 0; t < len; ++t) {
                std::tie(h, c) = cell(ad::slice(x_proj, 0, t, t + 1), h, c, w_h, d);
                outs.push_back(h);
            }
            seq = ad::concat(std::span<const Var<T>>(outs), 0);
        }
        return ad::affine(seq, tape.param(p_.get("decoder/out/w")), tape.param(p_.get("decoder/out/b")));
    }

    /// One token through every layer; returns logits [1 x |V|].
    Var<T> step(Tape<T>& tape, LstmState<T>& state, TokenId token) const {
        const std::size_t d = cfg_.model_dim;
        const TokenId ids[1] = {token};
        Var<T> x = ad::embedding_lookup(tape.param(p_.get("decoder/embedding")), std::span<const TokenId>(ids));
        for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
            const auto pre = layer_name("lstm", l);
            auto x_proj = ad::affine(x, tape.param(p_.get(pre + "/w_x")), tape.param(p_.get(pre + "/b")));
            std::tie(state.h[l], state.c[l]) = cell(x_proj, state.h[l], state.c[l], tape.param(p_.get(pre + "/w_h")), d);
            x = state.h[l];
        }
        return ad::affine(x, tape.param(p_.get("decoder/out/w")), tape.param(p_.get("decoder/out/b")));
    }

private:
    ParameterStore<T>& p_;
    const DecoderConfig& cfg_;
};

// ---------------------------------------------------------------------------
// Transformer

/// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(pos / 10000^(2i/d)).
template <class T>
std::vector<T> sinusoidal_positions(std::size_t len, std::size_t d) {
    std::vector<T> pe(len * d);
    for (std::size_t pos = 0; pos < len; ++pos) {
        for (std::size_t i = 0; i < d; ++i) {
            const double rate = std::pow(10000.0, double(2 * (i / 2)) / double(d));
            const double a = double(pos) / rate;
            pe[pos * d + i] = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
        }
    }
    return pe;
}

template <class T>
class TransformerDecoder {
public:
    TransformerDecoder(ParameterStore<T>& p, const DecoderConfig& cfg) : p_(p), cfg_(cfg) {}

    Var<T> teacher_forced(Tape<T>& tape, Var<T> joint, std::span<const TokenId> inputs) const {
        const std::size_t d = cfg_.model_dim, len = inputs.size();
        auto x = ad::add(ad::embedding_lookup(tape.param(p_.get("decoder/embedding")), inputs),
                         tape.constant(Shape{len, d}, sinusoidal_positions<T>(len, d)));
        for (std::size_t l = 0; l < cfg_.transformer_layers; ++l) {
            const auto pre = layer_name("layer", l);
            x = ad::add(x, attention(tape, pre + "/self", x, x, cfg_.causal));
            x = ad::add(x, attention(tape, pre + "/cross", x, joint, false));
            auto hidden = ad::relu(ad::affine(x, tape.param(p_.get(pre + "/ffn/w1")), tape.param(p_.get(pre + "/ffn/b1"))));
            x = ad::add(x, ad::affine(hidden, tape.param(p_.get(pre + "/ffn/w2")), tape.param(p_.get(pre + "/ffn/b2"))));
        }
        return ad::affine(x, tape.param(p_.get("decoder/out/w")), tape.param(p_.get("decoder/out/b")));
    }

private:
    Var<T> proj(Tape<T>& tape, const std::string& name, Var<T> x) const {
        return ad::affine(x, tape.param(p_.get(name + "/w")), tape.param(p_.get(name + "/b")));
    }

    /// Multi-head scaled dot-product attention of `queries` over `memory`.
    Var<T> attention(Tape<T>& tape, const std::string& prefix, Var<T> queries, Var<T> memory, bool causal) const {
        const std::size_t d = cfg_.model_dim, heads = cfg_.heads, dk = d / heads;
        const std::size_t lq = queries.rows(), lk = memory.rows();
        auto q = proj(tape, prefix + "_q", queries);
        auto k = proj(tape, prefix + "_k", memory);
        auto v = proj(tape, prefix + "_v", memory);
        std::optional<Var<T>> mask;
        if (causal) {
            std::vector<T> m(lq * lk, T(0));
            for (std::size_t i = 0; i < lq; ++i)
                for (std::size_t j = i + 1; j < lk; ++j) m[i * lk + j] = T(-1e9);
            mask = tape.constant(Shape{lq, lk}, std::move(m));
        }
        const double inv_sqrt = 1.0 / std::sqrt(double(dk));
        std::vector<Var<T>> outs;
        outs.reserve(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            auto qh = ad::slice(q, 1, h * dk, (h + 1) * dk);
            auto kh = ad::slice(k, 1, h * dk, (h + 1) * dk);
            auto vh = ad::slice(v, 1, h * dk, (h + 1) * dk);
            auto scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
            if (mask) scores = ad::add(scores, *mask);
            outs.push_back(ad::matmul(ad::softmax(scores, 1), vh));
        }
        return proj(tape, prefix + "_o", ad::concat(std::span<const Var<T>>(outs), 1));
    }

    ParameterStore<T>& p_;
    const DecoderConfig& cfg_;
};

// ---------------------------------------------------------------------------
// Kind-agnostic entry points

template <class T>
struct DecodeTrainResult {
    Var<T> logits;                 ///< [l x |V|]
    std::vector<TokenId> targets;  ///< w_1 .. w_l after truncation
    bool truncated = false;
    std::size_t original_length = 0;
};

/// Teacher-forced logits. Step i is fed w_{i-1} (BOS at step 1). Gold
/// sequences longer than max_length are truncated and flagged.
template <class T>
DecodeTrainResult<T> decode_train(Tape<T>& tape, ParameterStore<T>& p, const DecoderConfig& cfg, Var<T> joint,
                                  std::span<const TokenId> gold) {
    if (gold.empty()) throw std::invalid_argument("decode_train: empty gold explanation");
    DecodeTrainResult<T> out;
    out.original_length = gold.size();
    out.truncated = gold.size() > cfg.max_length;
    const std::size_t len = std::min(gold.size(), cfg.max_length);
    out.targets.assign(gold.begin(), gold.begin() + std::ptrdiff_t(len));
    std::vector<TokenId> inputs(len);
    inputs[0] = data::Vocabulary::bos;
    for (std::size_t i = 1; i < len; ++i) inputs[i] = out.targets[i - 1];
    if (cfg.kind == DecoderKind::lstm) {
        out.logits = LstmDecoder<T>(p, cfg).teacher_forced(tape, joint, inputs);
    } else {
        out.logits = TransformerDecoder<T>(p, cfg).teacher_forced(tape, joint, inputs);
    }
    return out;
}

/// Per-word cross-entropy normalized by l·|V|:
///   L = −1/(l·|V|) Σ_i Σ_k y_ik log p(w_ik).
/// The 1/|V| factor is intentional, so a uniform prediction costs ln|V|/|V|
/// rather than ln|V|. PAD targets are excluded from the sum and from l.
template <class T>
Var<T> explanation_loss(Var<T> logits, std::span<const TokenId> gold) {
    const auto& s = logits.shape();
    if (s.size() != 2 || s[0] != gold.size()) {
        throw shape_error("explanation_loss: logits " + ad::to_string(s) + " vs gold length " + std::to_string(gold.size()));
    }
    const std::size_t len = s[0], v = s[1];
    std::vector<T> onehot(len * v, T(0));
    std::size_t counted = 0;
    for (std::size_t i = 0; i < len; ++i) {
        if (gold[i] == data::Vocabulary::pad) continue;
        if (gold[i] < 0 || std::size_t(gold[i]) >= v) throw std::out_of_range("explanation_loss: gold id out of range");
        onehot[i * v + std::size_t(gold[i])] = T(1);
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("explanation_loss: explanation length l = 0");
    auto logp = ad::log_probabilities(logits, 1);
    auto picked = ad::sum(ad::mul(logp, logits.tape->constant(Shape{len, v}, std::move(onehot))));
    return ad::scale(picked, -1.0 / (double(counted) * double(v)));
}

/// Correctly predicted (argmax) non-PAD positions.
template <class T>
std::size_t count_correct_tokens(Var<T> logits, std::span<const TokenId> gold) {
    const std::size_t v = logits.cols();
    auto vals = logits.value();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] == data::Vocabulary::pad) continue;
        if (argmax<T>(vals.subspan(i * v, v)) == gold[i]) ++correct;
    }
    return correct;
}

/// Autoregressive argmax decoding from BOS until EOS (inclusive) or
/// max_length tokens. Ties break to the lowest token id.
template <class T>
std::vector<TokenId> decode_greedy(ParameterStore<T>& p, const DecoderConfig& cfg, std::span<const T> joint) {
    const std::size_t d = cfg.model_dim;
    if (joint.size() != d) throw shape_error("decode_greedy: joint embedding has wrong size");
    std::vector<TokenId> out;
    if (cfg.kind == DecoderKind::lstm) {
        Tape<T> tape(false);
        LstmDecoder<T> dec(p, cfg);
        auto j = tape.constant(Shape{1, d}, std::vector<T>(joint.begin(), joint.end()));
        auto state = dec.initial_state(tape, j);
        TokenId prev = data::Vocabulary::bos;
        while (out.size() < cfg.max_length) {
            auto logits = dec.step(tape, state, prev);
            prev = argmax(logits.value());
            out.push_back(prev);
            if (prev == data::Vocabulary::eos) break;
        }
    } else {
        TransformerDecoder<T> dec(p, cfg);
        std::vector<TokenId> inputs{data::Vocabulary::bos};
        while (out.size() < cfg.max_length) {
            Tape<T> tape(false);
            auto j = tape.constant(Shape{1, d}, std::vector<T>(joint.begin(), joint.end()));
            auto logits = dec.teacher_forced(tape, j, inputs);
            const std::size_t v = logits.cols();
            const TokenId next = argmax(logits.value().subspan((inputs.size() - 1) * v, v));
            out.push_back(next);
            if (next == data::Vocabulary::eos) break;
            inputs.push_back(next);
        }
    }
    return out;
}

/// Logits from one full teacher-forced pass must equal logits obtained by
/// feeding the gold prefix one token at a time (LSTM: incremental state;
/// Transformer: re-running on each prefix and reading its last position).
template <class T>
bool stepwise_equivalence_check(ParameterStore<T>& p, const DecoderConfig& cfg, std::span<const T> joint,
                                std::span<const TokenId> gold, double tol = 1e-5) {
    const std::size_t d = cfg.model_dim;
    Tape<T> full_tape(false);
    auto j = full_tape.constant(Shape{1, d}, std::vector<T>(joint.begin(), joint.end()));
    auto full = decode_train(full_tape, p, cfg, j, gold);
    const std::size_t len = full.targets.size(), v = full.logits.cols();
    auto full_vals = full.logits.value();

    std::vector<TokenId> inputs(len);
    inputs[0] = data::Vocabulary::bos;
    for (std::size_t i = 1; i < len; ++i) inputs[i] = full.targets[i - 1];

    auto close = [&](std::span<const T> row, std::size_t pos) {
        for (std::size_t k = 0; k < v; ++k)
            if (!(std::abs(double(row[k]) - double(full_vals[pos * v + k])) <= tol)) return false;
        return true;
    };

    if (cfg.kind == DecoderKind::lstm) {
        Tape<T> tape(false);
        LstmDecoder<T> dec(p, cfg);
        auto jj = tape.constant(Shape{1, d}, std::vector<T>(joint.begin(), joint.end()));
        auto state = dec.initial_state(tape, jj);
        for (std::size_t i = 0; i < len; ++i)
            if (!close(dec.step(tape, state, inputs[i]).value(), i)) return false;
    } else {
        TransformerDecoder<T> dec(p, cfg);
        for (std::size_t i = 0; i < len; ++i) {
            Tape<T> tape(false);
            auto jj = tape.constant(Shape{1, d}, std::vector<T>(joint.begin(), joint.end()));
            auto logits = dec.teacher_forced(tape, jj, std::span<const TokenId>(inputs.data(), i + 1));
            if (!close(logits.value().subspan(i * v, v), i)) return false;
        }
    }
    return true;
}

} // namespace xvqa::model
