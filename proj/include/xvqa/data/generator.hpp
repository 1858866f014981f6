#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "xvqa/data/predicates.hpp"
#include "xvqa/data/types.hpp"

namespace xvqa::data {

enum class QuestionType { existence, attribute, count, spatial };

inline const std::vector<std::string>& categories() {
    static const std::vector<std::string> v = {"cup", "ball", "box", "book", "lamp", "chair", "plate", "vase"};
    return v;
}

inline const std::vector<std::string>& category_plurals() {
    static const std::vector<std::string> v = {"cups",  "balls",  "boxes",  "books",
                                               "lamps", "chairs", "plates", "vases"};
    return v;
}

inline const std::vector<std::string>& colors() {
    static const std::vector<std::string> v = {"red", "green", "blue", "yellow", "white", "black"};
    return v;
}

/// one-hot(category) ++ one-hot(color) ++ (col/width, row/height)
inline std::size_t scene_feature_dim() { return categories().size() + colors().size() + 2; }

inline constexpr int kMaxCount = 3;

struct GeneratorConfig {
    int width = 5;
    int height = 5;
    /// Fixed number of objects (RoIs) per scene.
    int objects_per_scene = 5;
    double sigma = 0.05;
    std::vector<QuestionType> question_types = {QuestionType::existence, QuestionType::attribute,
                                                QuestionType::count, QuestionType::spatial};
    std::size_t predicate_threshold = kDefaultPredicateThreshold;
};

namespace detail {

inline std::size_t index_of(const std::vector<std::string>& v, const std::string& s) {
    return std::size_t(std::find(v.begin(), v.end(), s) - v.begin());
}

class SceneSampler {
public:
    SceneSampler(const GeneratorConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {}

    std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

    std::vector<std::pair<int, int>> shuffled_cells() {
        std::vector<std::pair<int, int>> cells;
        for (int r = 0; r < cfg_.height; ++r)
            for (int c = 0; c < cfg_.width; ++c) cells.emplace_back(c, r);
        std::shuffle(cells.begin(), cells.end(), rng_);
        return cells;
    }

    /// Random (category, color) with category not in `banned_categories` and
    /// the pair not equal to `banned_pair`.
    std::pair<std::size_t, std::size_t> random_object(const std::vector<std::size_t>& banned_categories,
                                                      std::pair<std::size_t, std::size_t> banned_pair = {~0u, ~0u}) {
        for (;;) {
            const std::size_t k = pick(categories().size());
            const std::size_t c = pick(colors().size());
            if (std::find(banned_categories.begin(), banned_categories.end(), k) != banned_categories.end()) continue;
            if (k == banned_pair.first && c == banned_pair.second) continue;
            return {k, c};
        }
    }

private:
    const GeneratorConfig& cfg_;
    std::mt19937_64& rng_;
};

inline std::vector<std::string> cell_words(const SceneObject& o) {
    return {"column", std::to_string(o.col), "row", std::to_string(o.row)};
}

inline void append(std::vector<std::string>& out, const std::vector<std::string>& more) {
    out.insert(out.end(), more.begin(), more.end());
}

} // namespace detail

/// Deterministic grid-world VQA dataset: a pure function of (seed, n, config).
///
/// Question predicates are extracted against the question-token frequencies
/// of the generated examples themselves.
inline Dataset generate_dataset(std::uint64_t seed, std::size_t n, const GeneratorConfig& cfg = {}) {
    if (n == 0) throw std::invalid_argument("generate_dataset: n must be positive");
    if (cfg.question_types.empty()) throw std::invalid_argument("generate_dataset: no question types enabled");
    if (cfg.width < 1 || cfg.height < 1 || cfg.objects_per_scene < 1) {
        throw std::invalid_argument("generate_dataset: grid and object counts must be positive");
    }
    if (cfg.objects_per_scene > cfg.width * cfg.height) {
        throw std::invalid_argument("generate_dataset: grid too small: " + std::to_string(cfg.width) + "x" +
                                    std::to_string(cfg.height) + " cannot host " +
                                    std::to_string(cfg.objects_per_scene) + " objects");
    }
    for (auto t : cfg.question_types) {
        if (t == QuestionType::count && cfg.objects_per_scene < kMaxCount) {
            throw std::invalid_argument("generate_dataset: grid too small: count questions need at least " +
                                        std::to_string(kMaxCount) + " objects per scene");
        }
        if (t == QuestionType::spatial && (cfg.objects_per_scene < 2 || cfg.width < 2)) {
            throw std::invalid_argument("generate_dataset: grid too small: spatial questions need two columns "
                                        "and two objects");
        }
    }
    if (!(cfg.sigma >= 0.0)) throw std::invalid_argument("generate_dataset: sigma must be non-negative");

    std::mt19937_64 rng(seed);
    detail::SceneSampler sampler(cfg, rng);
    std::normal_distribution<double> noise(0.0, cfg.sigma > 0 ? cfg.sigma : 1.0);
    const auto& cats = categories();
    const auto& plurals = category_plurals();
    const auto& cols = colors();
    std::array<std::size_t, 4> yes_counter{};

    Dataset ds;
    ds.feature_dim = scene_feature_dim();
    ds.examples.reserve(n);
    for (std::size_t idx = 0; idx < n; ++idx) {
        const QuestionType type = cfg.question_types[sampler.pick(cfg.question_types.size())];
        const bool want_yes = (yes_counter[std::size_t(type)]++ % 2) == 0;
        auto cells = sampler.shuffled_cells();
        std::size_t next_cell = 0;
        Scene scene{cfg.width, cfg.height, {}};
        auto place = [&](std::size_t k, std::size_t c, std::pair<int, int> cell) {
            scene.objects.push_back(SceneObject{0, cats[k], cols[c], cell.first, cell.second});
        };

        VqaExample ex;
        std::string answer;
        // Objects that the explanation refers to, in scene.objects order before shuffling.
        switch (type) {
        case QuestionType::existence: {
            const std::size_t k = sampler.pick(cats.size()), c = sampler.pick(cols.size());
            ex.question_tokens = {"is", "there", "a", cols[c], cats[k]};
            if (want_yes) place(k, c, cells[next_cell++]);
            while (int(scene.objects.size()) < cfg.objects_per_scene) {
                auto [ok, oc] = sampler.random_object({}, {k, c});
                place(ok, oc, cells[next_cell++]);
            }
            answer = want_yes ? "yes" : "no";
            if (want_yes) {
                ex.explanation_tokens = {"there", "is", "a", cols[c], cats[k], "at"};
                detail::append(ex.explanation_tokens, detail::cell_words(scene.objects[0]));
            } else {
                ex.explanation_tokens = {"there", "is", "no", cols[c], cats[k]};
            }
            break;
        }
        case QuestionType::attribute: {
            const std::size_t k = sampler.pick(cats.size()), c = sampler.pick(cols.size());
            ex.question_tokens = {"what", "color", "is", "the", cats[k]};
            place(k, c, cells[next_cell++]);
            while (int(scene.objects.size()) < cfg.objects_per_scene) {
                auto [ok, oc] = sampler.random_object({k});
                place(ok, oc, cells[next_cell++]);
            }
            answer = cols[c];
            ex.explanation_tokens = {"the", cats[k], "at"};
            detail::append(ex.explanation_tokens, detail::cell_words(scene.objects[0]));
            detail::append(ex.explanation_tokens, {"is", cols[c]});
            break;
        }
        case QuestionType::count: {
            const std::size_t k = sampler.pick(cats.size());
            const int count = int(sampler.pick(std::size_t(kMaxCount) + 1));
            ex.question_tokens = {"how", "many", plurals[k]};
            for (int i = 0; i < count; ++i) place(k, sampler.pick(cols.size()), cells[next_cell++]);
            std::vector<SceneObject> matched = scene.objects;
            while (int(scene.objects.size()) < cfg.objects_per_scene) {
                auto [ok, oc] = sampler.random_object({k});
                place(ok, oc, cells[next_cell++]);
            }
            answer = std::to_string(count);
            std::sort(matched.begin(), matched.end(), [](const SceneObject& a, const SceneObject& b) {
                return std::pair(a.row, a.col) < std::pair(b.row, b.col);
            });
            if (count == 0) {
                ex.explanation_tokens = {"there", "are", "no", plurals[k]};
            } else {
                ex.explanation_tokens = count == 1 ? std::vector<std::string>{"there", "is", "1", cats[k], "at"}
                                                   : std::vector<std::string>{"there", "are", answer, plurals[k], "at"};
                for (std::size_t i = 0; i < matched.size(); ++i) {
                    if (i) ex.explanation_tokens.push_back("and");
                    detail::append(ex.explanation_tokens, detail::cell_words(matched[i]));
                }
            }
            break;
        }
        case QuestionType::spatial: {
            const std::size_t k1 = sampler.pick(cats.size());
            std::size_t k2 = sampler.pick(cats.size() - 1);
            if (k2 >= k1) ++k2;
            ex.question_tokens = {"is", "the", cats[k1], "left", "of", "the", cats[k2]};
            auto a = cells[next_cell++];
            std::size_t j = next_cell;
            while (cells[j].first == a.first) ++j;
            auto b = cells[j];
            cells.erase(cells.begin() + std::ptrdiff_t(j));
            if (a.first > b.first) std::swap(a, b);  // a is strictly left of b
            if (!want_yes) std::swap(a, b);
            place(k1, sampler.pick(cols.size()), a);
            place(k2, sampler.pick(cols.size()), b);
            while (int(scene.objects.size()) < cfg.objects_per_scene) {
                auto [ok, oc] = sampler.random_object({k1, k2});
                place(ok, oc, cells[next_cell++]);
            }
            answer = want_yes ? "yes" : "no";
            ex.explanation_tokens = {"the", cats[k1], "is", "at", "column", std::to_string(a.first),
                                     "and", "the", cats[k2], "is", "at", "column", std::to_string(b.first)};
            break;
        }
        }
        ex.explanation_tokens.push_back(kEosToken);

        std::shuffle(scene.objects.begin(), scene.objects.end(), rng);
        const std::size_t d = ds.feature_dim;
        ex.image_features = ad::Tensor(ad::Shape{scene.objects.size(), d});
        for (std::size_t r = 0; r < scene.objects.size(); ++r) {
            auto& o = scene.objects[r];
            o.object_id = int(r);
            float* row = ex.image_features.values().data() + r * d;
            row[detail::index_of(cats, o.category)] = 1.0f;
            row[cats.size() + detail::index_of(cols, o.color)] = 1.0f;
            row[d - 2] = float(double(o.col) / double(cfg.width));
            row[d - 1] = float(double(o.row) / double(cfg.height));
            if (cfg.sigma > 0) {
                for (std::size_t j = 0; j < d; ++j) row[j] = float(double(row[j]) + noise(rng));
            }
            ex.image_predicates.push_back(o.color);
            ex.image_predicates.push_back(o.category);
        }

        ex.id = "s" + std::to_string(seed) + "-" + std::to_string(idx);
        ex.answers = {AnswerCount{answer, 10}};
        ex.scene = std::move(scene);
        ds.examples.push_back(std::move(ex));
    }

    assign_question_predicates(ds, question_token_frequencies(ds), cfg.predicate_threshold);
    return ds;
}

/// Splits off the first `n_first` examples; both parts get question predicates
/// recomputed against the first part's token frequencies.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, std::size_t n_first,
                                                 std::size_t threshold = kDefaultPredicateThreshold) {
    if (n_first > ds.size()) throw std::invalid_argument("split_dataset: split point exceeds dataset size");
    Dataset a{ds.feature_dim, {ds.examples.begin(), ds.examples.begin() + std::ptrdiff_t(n_first)}};
    Dataset b{ds.feature_dim, {ds.examples.begin() + std::ptrdiff_t(n_first), ds.examples.end()}};
    const auto freq = question_token_frequencies(a);
    assign_question_predicates(a, freq, threshold);
    assign_question_predicates(b, freq, threshold);
    return {std::move(a), std::move(b)};
}

} // namespace xvqa::data
