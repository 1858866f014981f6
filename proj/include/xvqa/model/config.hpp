#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace xvqa::model {

struct BackboneConfig {
    std::size_t d_in = 16;          ///< RoI feature dimension
    std::size_t d_h = 768;          ///< hidden / joint-embedding dimension
    std::size_t word_vocab = 0;     ///< |V|, shared by question tokens and predicates
    std::size_t answer_count = 0;   ///< |A|
    std::size_t glimpses = 1;

    void validate() const {
        if (d_in == 0 || d_h == 0 || word_vocab == 0) throw std::invalid_argument("BackboneConfig: dimensions must be positive");
        if (answer_count < 2) throw std::invalid_argument("BackboneConfig: need at least 2 answers");
        if (glimpses != 1) throw std::invalid_argument("BackboneConfig: only a single glimpse is supported");
    }

    friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

enum class DecoderKind { lstm, transformer };

inline const char* to_string(DecoderKind k) { return k == DecoderKind::lstm ? "lstm" : "transformer"; }

inline DecoderKind parse_decoder_kind(const std::string& s) {
    if (s == "lstm") return DecoderKind::lstm;
    if (s == "transformer") return DecoderKind::transformer;
    throw std::invalid_argument("unknown decoder kind '" + s + "' (expected lstm or transformer)");
}

struct DecoderConfig {
    DecoderKind kind = DecoderKind::lstm;
    std::size_t model_dim = 768;
    std::size_t vocab = 0;
    std::size_t lstm_layers = 2;
    std::size_t heads = 8;
    std::size_t transformer_layers = 2;
    std::size_t ffn_dim = 0;        ///< 0 selects 4 * model_dim
    std::size_t max_length = 20;
    /// Causal self-attention mask. Only verification code turns this off.
    bool causal = true;

    std::size_t feed_forward_dim() const { return ffn_dim ? ffn_dim : 4 * model_dim; }

    void validate() const {
        if (model_dim == 0 || vocab == 0) throw std::invalid_argument("DecoderConfig: dimensions must be positive");
        if (max_length < 2) throw std::invalid_argument("DecoderConfig: max length must be at least 2");
        if (kind == DecoderKind::lstm && lstm_layers == 0) throw std::invalid_argument("DecoderConfig: need >= 1 LSTM layer");
        if (kind == DecoderKind::transformer) {
            if (heads == 0 || model_dim % heads != 0) {
                throw std::invalid_argument("DecoderConfig: model dim " + std::to_string(model_dim) +
                                            " not divisible by " + std::to_string(heads) + " heads");
            }
            if (transformer_layers == 0) throw std::invalid_argument("DecoderConfig: need >= 1 transformer layer");
        }
    }

    friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

struct ModelConfig {
    BackboneConfig backbone;
    DecoderConfig decoder;

    void validate() const {
        backbone.validate();
        decoder.validate();
        if (decoder.model_dim != backbone.d_h) {
            throw std::invalid_argument("ModelConfig: decoder input dim " + std::to_string(decoder.model_dim) +
                                        " must equal joint dim " + std::to_string(backbone.d_h));
        }
        if (decoder.vocab != backbone.word_vocab) throw std::invalid_argument("ModelConfig: vocabulary sizes differ");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"backbone",
             {{"d_in", c.backbone.d_in},
              {"d_h", c.backbone.d_h},
              {"word_vocab", c.backbone.word_vocab},
              {"answer_count", c.backbone.answer_count},
              {"glimpses", c.backbone.glimpses}}},
            {"decoder",
             {{"kind", to_string(c.decoder.kind)},
              {"model_dim", c.decoder.model_dim},
              {"vocab", c.decoder.vocab},
              {"lstm_layers", c.decoder.lstm_layers},
              {"heads", c.decoder.heads},
              {"transformer_layers", c.decoder.transformer_layers},
              {"ffn_dim", c.decoder.ffn_dim},
              {"max_length", c.decoder.max_length}}}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    const auto& b = j.at("backbone");
    c.backbone.d_in = b.at("d_in").get<std::size_t>();
    c.backbone.d_h = b.at("d_h").get<std::size_t>();
    c.backbone.word_vocab = b.at("word_vocab").get<std::size_t>();
    c.backbone.answer_count = b.at("answer_count").get<std::size_t>();
    c.backbone.glimpses = b.value("glimpses", std::size_t{1});
    const auto& d = j.at("decoder");
    c.decoder.kind = parse_decoder_kind(d.at("kind").get<std::string>());
    c.decoder.model_dim = d.at("model_dim").get<std::size_t>();
    c.decoder.vocab = d.at("vocab").get<std::size_t>();
    c.decoder.lstm_layers = d.value("lstm_layers", std::size_t{2});
    c.decoder.heads = d.value("heads", std::size_t{8});
    c.decoder.transformer_layers = d.value("transformer_layers", std::size_t{2});
    c.decoder.ffn_dim = d.value("ffn_dim", std::size_t{0});
    c.decoder.max_length = d.value("max_length", std::size_t{20});
    return c;
}

} // namespace xvqa::model
