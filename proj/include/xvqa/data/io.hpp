#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "xvqa/data/types.hpp"
#include "xvqa/error.hpp"

// Dataset file: UTF-8 JSONL. Line 1 is the header
//   {"format":"xvqa-dataset","version":1,"d":<feature dim>}
// and every following line is one VqaExample.

namespace xvqa::data {

using nlohmann::json;

inline constexpr const char* kDatasetFormat = "xvqa-dataset";
inline constexpr int kDatasetVersion = 1;

inline json scene_to_json(const Scene& s) {
    json objects = json::array();
    for (const auto& o : s.objects) {
        objects.push_back({{"object_id", o.object_id},
                           {"category", o.category},
                           {"color", o.color},
                           {"cell", {o.col, o.row}}});
    }
    return {{"width", s.width}, {"height", s.height}, {"objects", objects}};
}

inline Scene scene_from_json(const json& j) {
    Scene s;
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    for (const auto& o : j.at("objects")) {
        const auto& cell = o.at("cell");
        if (!cell.is_array() || cell.size() != 2) throw data_error("scene object cell must be [col,row]");
        s.objects.push_back(SceneObject{o.at("object_id").get<int>(), o.at("category").get<std::string>(),
                                        o.at("color").get<std::string>(), cell[0].get<int>(), cell[1].get<int>()});
    }
    return s;
}

inline json example_to_json(const VqaExample& ex) {
    json features = json::array();
    const std::size_t r = ex.image_features.rows(), d = ex.image_features.cols();
    for (std::size_t i = 0; i < r; ++i) {
        json row = json::array();
        for (std::size_t k = 0; k < d; ++k) row.push_back(double(ex.image_features.at(i, k)));
        features.push_back(std::move(row));
    }
    json answers = json::array();
    for (const auto& a : ex.answers) answers.push_back({{"answer", a.answer}, {"count", a.count}});
    json j = {{"id", ex.id},
              {"image_features", std::move(features)},
              {"image_predicates", ex.image_predicates},
              {"question_tokens", ex.question_tokens},
              {"question_predicates", ex.question_predicates},
              {"answers", std::move(answers)},
              {"explanation_tokens", ex.explanation_tokens}};
    j["scene"] = ex.scene ? scene_to_json(*ex.scene) : json(nullptr);
    return j;
}

/// Parses one example; `expected_dim` of 0 accepts any consistent width.
inline VqaExample example_from_json(const json& j, std::size_t expected_dim = 0) {
    VqaExample ex;
    ex.id = j.at("id").get<std::string>();
    const auto& rows = j.at("image_features");
    if (!rows.is_array() || rows.empty()) throw data_error("example '" + ex.id + "' has no feature rows (R = 0)");
    const std::size_t d = rows[0].size();
    if (d == 0) throw data_error("example '" + ex.id + "' has zero-width feature rows");
    if (expected_dim && d != expected_dim) {
        throw data_error("example '" + ex.id + "' feature dimension " + std::to_string(d) +
                         " does not match header d = " + std::to_string(expected_dim));
    }
    ex.image_features = ad::Tensor(ad::Shape{rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != d) throw data_error("example '" + ex.id + "' has ragged feature rows");
        for (std::size_t k = 0; k < d; ++k) ex.image_features.at(i, k) = float(rows[i][k].get<double>());
    }
    ex.image_predicates = j.at("image_predicates").get<std::vector<std::string>>();
    ex.question_tokens = j.at("question_tokens").get<std::vector<std::string>>();
    ex.question_predicates = j.at("question_predicates").get<std::vector<std::string>>();
    for (const auto& a : j.at("answers")) ex.answers.push_back({a.at("answer").get<std::string>(), a.at("count").get<int>()});
    ex.explanation_tokens = j.at("explanation_tokens").get<std::vector<std::string>>();
    if (ex.explanation_tokens.empty() || ex.explanation_tokens.back() != kEosToken) {
        throw data_error("example '" + ex.id + "' explanation must be non-empty and end with " + kEosToken);
    }
    if (j.contains("scene") && !j["scene"].is_null()) ex.scene = scene_from_json(j["scene"]);
    return ex;
}

inline void write_dataset(const Dataset& ds, std::ostream& out) {
    out << json{{"format", kDatasetFormat}, {"version", kDatasetVersion}, {"d", ds.feature_dim}}.dump() << '\n';
    for (const auto& ex : ds.examples) out << example_to_json(ex).dump() << '\n';
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    write_dataset(ds, out);
    if (!out) throw data_error("failed writing '" + path + "'");
}

inline Dataset read_dataset(std::istream& in) {
    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw data_error(std::string("malformed JSON: ") + e.what(), lineno);
        }
        try {
            if (!have_header) {
                if (j.value("format", "") != kDatasetFormat) throw data_error("missing xvqa-dataset header");
                if (j.value("version", 0) != kDatasetVersion) throw data_error("unsupported dataset version");
                ds.feature_dim = j.at("d").get<std::size_t>();
                have_header = true;
                continue;
            }
            ds.examples.push_back(example_from_json(j, ds.feature_dim));
        } catch (const data_error& e) {
            throw data_error(e.what(), lineno);
        } catch (const json::exception& e) {
            throw data_error(std::string("malformed record: ") + e.what(), lineno);
        }
    }
    if (!have_header) throw data_error("empty dataset file (no header)");
    return ds;
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open dataset '" + path + "'");
    return read_dataset(in);
}

} // namespace xvqa::data
