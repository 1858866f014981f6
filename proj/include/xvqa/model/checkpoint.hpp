#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xvqa/error.hpp"
#include "xvqa/model/model.hpp"

// Checkpoint file layout:
//   <JSON header>\n<raw little-endian float32 payload>
// header = {"format":"xvqa-ckpt","version":1,
//           "tensors":[{"name","shape","byte_offset"}],
//           "config":{"model":{...},"vocabulary":{"tokens":[...],"answers":[...]}, ...}}
// byte_offset counts from the first byte after the newline.

namespace xvqa::model {

inline constexpr const char* kCheckpointFormat = "xvqa-ckpt";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline void write_f32_le(std::ostream& out, std::span<const float> v) {
    static_assert(sizeof(float) == 4);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 4));
    } else {
        for (float f : v) {
            auto u = std::bit_cast<std::uint32_t>(f);
            char b[4] = {char(u), char(u >> 8), char(u >> 16), char(u >> 24)};
            out.write(b, 4);
        }
    }
}

inline void read_f32_le(std::istream& in, std::span<float> v) {
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * 4));
    } else {
        for (float& f : v) {
            unsigned char b[4];
            in.read(reinterpret_cast<char*>(b), 4);
            f = std::bit_cast<float>(std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
                                     std::uint32_t(b[3]) << 24);
        }
    }
}

} // namespace detail

inline nlohmann::json vocabulary_to_json(const data::Vocabulary& v) {
    return {{"tokens", v.tokens()}, {"answers", v.answers()}};
}

inline data::Vocabulary vocabulary_from_json(const nlohmann::json& j) {
    return data::Vocabulary(j.at("tokens").get<std::vector<std::string>>(),
                            j.at("answers").get<std::vector<std::string>>());
}

/// Writes a checkpoint. `extra` is merged into the header's config object.
template <class T>
void save_checkpoint(const Model<T>& m, std::ostream& out, const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : m.params) {
        tensors.push_back({{"name", name}, {"shape", t.shape()}, {"byte_offset", offset}});
        offset += std::uint64_t(t.numel()) * 4;
    }
    nlohmann::json config = extra.is_object() ? extra : nlohmann::json::object();
    config["model"] = to_json(m.config);
    config["vocabulary"] = vocabulary_to_json(m.vocab);
    nlohmann::json header = {{"format", kCheckpointFormat},
                             {"version", kCheckpointVersion},
                             {"tensors", std::move(tensors)},
                             {"config", std::move(config)}};
    out << header.dump() << '\n';
    std::vector<float> buf;
    for (const auto& [name, t] : m.params) {
        buf.assign(t.values().begin(), t.values().end());
        detail::write_f32_le(out, buf);
    }
}

template <class T>
void save_checkpoint(const Model<T>& m, const std::string& path, const nlohmann::json& extra = nlohmann::json::object()) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open checkpoint '" + path + "' for writing");
    save_checkpoint(m, out, extra);
    if (!out) throw data_error("failed writing checkpoint '" + path + "'");
}

struct CheckpointHeader {
    nlohmann::json config;
    nlohmann::json tensors;
};

/// Reads a checkpoint, rebuilding the model from its stored config and
/// vocabulary. Every tensor must match the shape the config implies.
template <class T = float>
Model<T> load_checkpoint(std::istream& in, nlohmann::json* config_out = nullptr) {
    std::string line;
    if (!std::getline(in, line)) throw data_error("checkpoint: missing header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("checkpoint: malformed header: ") + e.what());
    }
    if (header.value("format", "") != kCheckpointFormat) throw data_error("checkpoint: not an xvqa-ckpt file");
    if (header.value("version", 0) != kCheckpointVersion) throw data_error("checkpoint: unsupported version");

    Model<T> m;
    try {
        const auto& cfg = header.at("config");
        m.config = model_config_from_json(cfg.at("model"));
        m.vocab = vocabulary_from_json(cfg.at("vocabulary"));
        m.config.validate();
        if (config_out) *config_out = cfg;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("checkpoint: bad config: ") + e.what());
    }
    if (m.vocab.size() != m.config.backbone.word_vocab || m.vocab.answer_count() != m.config.backbone.answer_count) {
        throw shape_error("checkpoint: vocabulary size does not match model config");
    }
    // Allocate the expected parameter set, then fill it from the payload.
    std::mt19937_64 rng(0);
    init_backbone(m.params, m.config.backbone, rng);
    init_decoder(m.params, m.config.decoder, rng);

    const auto& tensors = header.at("tensors");
    if (tensors.size() != m.params.size()) {
        throw shape_error("checkpoint: holds " + std::to_string(tensors.size()) + " tensors, config implies " +
                          std::to_string(m.params.size()));
    }
    std::uint64_t expected_offset = 0;
    std::vector<float> buf;
    for (const auto& entry : tensors) {
        const auto name = entry.at("name").get<std::string>();
        if (!m.params.contains(name)) throw shape_error("checkpoint: unexpected tensor '" + name + "'");
        auto& t = m.params.get(name);
        const auto shape = entry.at("shape").get<ad::Shape>();
        if (shape != t.shape()) {
            throw shape_error("checkpoint: tensor '" + name + "' has shape " + ad::to_string(shape) + ", config implies " +
                              ad::to_string(t.shape()));
        }
        if (entry.at("byte_offset").get<std::uint64_t>() != expected_offset) {
            throw data_error("checkpoint: tensor '" + name + "' byte offset out of sequence");
        }
        buf.resize(t.numel());
        detail::read_f32_le(in, buf);
        if (!in) throw data_error("checkpoint: payload truncated at tensor '" + name + "'");
        for (std::size_t i = 0; i < buf.size(); ++i) t[i] = T(buf[i]);
        expected_offset += std::uint64_t(t.numel()) * 4;
    }
    return m;
}

template <class T = float>
Model<T> load_checkpoint(const std::string& path, nlohmann::json* config_out = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint '" + path + "'");
    return load_checkpoint<T>(in, config_out);
}

} // namespace xvqa::model
