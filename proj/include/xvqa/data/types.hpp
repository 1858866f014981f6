#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "xvqa/autodiff/tensor.hpp"

namespace xvqa::data {

struct SceneObject {
    int object_id = 0;
    std::string category;
    std::string color;
    int col = 0;
    int row = 0;

    friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

/// Grid world standing in for an image: at most one object per cell.
struct Scene {
    int width = 0;
    int height = 0;
    std::vector<SceneObject> objects;

    friend bool operator==(const Scene&, const Scene&) = default;
};

struct AnswerCount {
    std::string answer;
    int count = 0;

    friend bool operator==(const AnswerCount&, const AnswerCount&) = default;
};

struct VqaExample {
    std::string id;
    ad::Tensor image_features;  ///< [R x d] RoI features
    std::vector<std::string> image_predicates;
    std::vector<std::string> question_tokens;
    std::vector<std::string> question_predicates;
    std::vector<AnswerCount> answers;
    std::vector<std::string> explanation_tokens;  ///< ends with the end-of-sequence token
    std::optional<Scene> scene;

    /// Annotated answer with the highest count (first on ties).
    const std::string& top_answer() const {
        static const std::string none;
        const AnswerCount* best = nullptr;
        for (const auto& a : answers)
            if (!best || a.count > best->count) best = &a;
        return best ? best->answer : none;
    }

    friend bool operator==(const VqaExample&, const VqaExample&) = default;
};

struct Dataset {
    std::size_t feature_dim = 0;
    std::vector<VqaExample> examples;

    std::size_t size() const noexcept { return examples.size(); }
    bool empty() const noexcept { return examples.empty(); }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kUnkToken = "<unk>";

} // namespace xvqa::data
