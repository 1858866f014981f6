#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "xvqa/data/generator.hpp"
#include "xvqa/data/io.hpp"
#include "xvqa/data/predicates.hpp"
#include "xvqa/data/vocabulary.hpp"

using namespace xvqa;
using namespace xvqa::data;

namespace {

// Answers a question by inspecting the scene directly.
std::string brute_force_answer(const VqaExample& ex) {
    const auto& q = ex.question_tokens;
    const auto& objs = ex.scene->objects;
    auto cat_of_plural = [](const std::string& p) {
        const auto& pl = category_plurals();
        return categories()[std::size_t(std::find(pl.begin(), pl.end(), p) - pl.begin())];
    };
    if (q[0] == "is" && q[1] == "there") {
        bool found = std::any_of(objs.begin(), objs.end(),
                                 [&](const SceneObject& o) { return o.color == q[3] && o.category == q[4]; });
        return found ? "yes" : "no";
    }
    if (q[0] == "what") {
        for (const auto& o : objs)
            if (o.category == q[4]) return o.color;
        return "?";
    }
    if (q[0] == "how") {
        const auto cat = cat_of_plural(q[2]);
        return std::to_string(std::count_if(objs.begin(), objs.end(), [&](const SceneObject& o) { return o.category == cat; }));
    }
    int c1 = -1, c2 = -1;
    for (const auto& o : objs) {
        if (o.category == q[2]) c1 = o.col;
        if (o.category == q[6]) c2 = o.col;
    }
    return c1 < c2 ? "yes" : "no";
}

} // namespace

TEST(Generator, AnswersAgreeWithScene) {
    auto ds = generate_dataset(11, 400);
    ASSERT_EQ(ds.size(), 400u);
    for (const auto& ex : ds.examples) {
        ASSERT_TRUE(ex.scene);
        EXPECT_EQ(ex.top_answer(), brute_force_answer(ex)) << ex.id;
    }
}

TEST(Generator, SceneInvariants) {
    GeneratorConfig cfg;
    cfg.sigma = 0.0;
    auto ds = generate_dataset(5, 200, cfg);
    for (const auto& ex : ds.examples) {
        const auto& s = *ex.scene;
        EXPECT_EQ(int(s.objects.size()), cfg.objects_per_scene);
        std::set<std::pair<int, int>> cells;
        for (const auto& o : s.objects) {
            EXPECT_TRUE(cells.insert({o.col, o.row}).second) << "two objects share a cell in " << ex.id;
            EXPECT_GE(o.col, 0);
            EXPECT_LT(o.col, s.width);
        }
        // sigma = 0: features are exact one-hot plus normalized position
        EXPECT_EQ(ex.image_features.rows(), s.objects.size());
        EXPECT_EQ(ex.image_features.cols(), scene_feature_dim());
        for (std::size_t r = 0; r < s.objects.size(); ++r) {
            const auto& o = s.objects[r];
            const auto cat = std::size_t(std::find(categories().begin(), categories().end(), o.category) - categories().begin());
            EXPECT_EQ(ex.image_features.at(r, cat), 1.0f);
            EXPECT_FLOAT_EQ(ex.image_features.at(r, scene_feature_dim() - 2), float(o.col) / 5.0f);
        }
        EXPECT_EQ(ex.image_predicates.size(), 2 * s.objects.size());
        EXPECT_EQ(ex.explanation_tokens.back(), kEosToken);
    }
}

TEST(Generator, ExplanationsMentionTheAnswerEvidence) {
    auto ds = generate_dataset(2, 300);
    for (const auto& ex : ds.examples) {
        const auto& e = ex.explanation_tokens;
        const auto& q = ex.question_tokens;
        if (q[0] == "what" || (q[0] == "how" && ex.top_answer() != "0")) {
            EXPECT_NE(std::find(e.begin(), e.end(), ex.top_answer()), e.end()) << ex.id;
        }
    }
}

TEST(Generator, DeterministicInSeed) {
    EXPECT_EQ(generate_dataset(3, 50), generate_dataset(3, 50));
    EXPECT_NE(generate_dataset(3, 50), generate_dataset(4, 50));
}

TEST(Generator, BalancedYesNo) {
    GeneratorConfig cfg;
    cfg.question_types = {QuestionType::existence, QuestionType::spatial};
    auto ds = generate_dataset(9, 1000, cfg);
    std::size_t yes = 0;
    for (const auto& ex : ds.examples) yes += ex.top_answer() == "yes";
    EXPECT_NEAR(double(yes) / 1000.0, 0.5, 0.01);
}

TEST(Generator, RejectsImpossibleConfigs) {
    GeneratorConfig cfg;
    cfg.width = cfg.height = 2;
    cfg.objects_per_scene = 5;
    EXPECT_THROW(generate_dataset(0, 10, cfg), std::invalid_argument);
    GeneratorConfig few;
    few.objects_per_scene = 2;
    few.question_types = {QuestionType::count};
    EXPECT_THROW(generate_dataset(0, 10, few), std::invalid_argument);
    GeneratorConfig none;
    none.question_types.clear();
    EXPECT_THROW(generate_dataset(0, 10, none), std::invalid_argument);
    EXPECT_THROW(generate_dataset(0, 0), std::invalid_argument);
}

TEST(Predicates, DropsStopWordsAndRareTokens) {
    TokenFrequencies freq{{"red", 12}, {"cup", 30}, {"rare", 2}, {"is", 100}};
    auto p = extract_question_predicates({"is", "there", "a", "red", "cup", "rare", "cup"}, default_stop_words(), freq, 10);
    EXPECT_EQ(p, (std::vector<std::string>{"red", "cup", "cup"}));
}

TEST(Predicates, ThresholdIsInclusive) {
    TokenFrequencies freq{{"box", 10}};
    EXPECT_EQ(extract_question_predicates({"box"}, {}, freq, 10).size(), 1u);
    EXPECT_EQ(extract_question_predicates({"box"}, {}, freq, 11).size(), 0u);
}

TEST(Predicates, SplitUsesFirstPartFrequencies) {
    auto ds = generate_dataset(1, 120);
    auto [a, b] = split_dataset(ds, 100, 10);
    const auto freq = question_token_frequencies(a);
    for (const auto& ex : b.examples)
        EXPECT_EQ(ex.question_predicates, extract_question_predicates(ex.question_tokens, default_stop_words(), freq, 10));
    EXPECT_THROW(split_dataset(ds, 121), std::invalid_argument);
}

TEST(Vocabulary, ReservedIdsAndUnknown) {
    Vocabulary v({"cup", "red"}, {"yes"});
    EXPECT_EQ(v.id(kPadToken), Vocabulary::pad);
    EXPECT_EQ(v.id(kBosToken), Vocabulary::bos);
    EXPECT_EQ(v.id(kEosToken), Vocabulary::eos);
    EXPECT_EQ(v.id("zebra"), Vocabulary::unk);
    EXPECT_EQ(v.size(), 6u);
    EXPECT_EQ(v.answer_label("no"), -1);
    EXPECT_EQ(v.decode({Vocabulary::bos, v.id("red"), Vocabulary::unk, Vocabulary::eos, Vocabulary::pad}),
              (std::vector<std::string>{"red", kUnkToken}));
    EXPECT_THROW(v.token(99), std::out_of_range);
}

TEST(Vocabulary, BuildIsOrderIndependentAndFiltersAnswers) {
    auto ds = generate_dataset(4, 200);
    auto rev = ds;
    std::reverse(rev.examples.begin(), rev.examples.end());
    EXPECT_EQ(Vocabulary::build(ds), Vocabulary::build(rev));
    auto v = Vocabulary::build(ds);
    for (const auto& ex : ds.examples)
        for (const auto& t : ex.explanation_tokens) EXPECT_TRUE(v.contains(t));
    EXPECT_THROW(Vocabulary::build(ds, 100000), data_error);
    EXPECT_THROW(Vocabulary::build(Dataset{}), std::invalid_argument);
}

TEST(DatasetIo, RoundTrip) {
    auto ds = generate_dataset(8, 30);
    std::stringstream ss;
    write_dataset(ds, ss);
    auto back = read_dataset(ss);
    EXPECT_EQ(back.feature_dim, ds.feature_dim);
    ASSERT_EQ(back.size(), ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(back.examples[i].id, ds.examples[i].id);
        EXPECT_EQ(back.examples[i].scene, ds.examples[i].scene);
        EXPECT_EQ(back.examples[i].explanation_tokens, ds.examples[i].explanation_tokens);
        EXPECT_EQ(back.examples[i].image_features, ds.examples[i].image_features);
    }
}

TEST(DatasetIo, ErrorsCarryLineNumbers) {
    auto ds = generate_dataset(8, 3);
    std::stringstream ss;
    write_dataset(ds, ss);
    auto text = ss.str();
    // corrupt the third line
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    lines[2] = "{not json";
    std::string joined;
    for (auto& l : lines) joined += l + "\n";
    std::istringstream bad(joined);
    try {
        read_dataset(bad);
        FAIL() << "expected data_error";
    } catch (const data_error& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(DatasetIo, RejectsMissingHeaderWrongDimAndMissingEos) {
    std::istringstream empty("");
    EXPECT_THROW(read_dataset(empty), data_error);
    std::istringstream no_header("{\"id\":\"x\"}\n");
    EXPECT_THROW(read_dataset(no_header), data_error);

    auto ex = generate_dataset(1, 1).examples[0];
    auto j = example_to_json(ex);
    std::istringstream wrong_dim(std::string("{\"format\":\"xvqa-dataset\",\"version\":1,\"d\":3}\n") + j.dump() + "\n");
    EXPECT_THROW(read_dataset(wrong_dim), data_error);

    j["explanation_tokens"] = {"no", "terminator"};
    EXPECT_THROW(example_from_json(j), data_error);
    j = example_to_json(ex);
    j["image_features"] = json::array();
    EXPECT_THROW(example_from_json(j), data_error);
}

TEST(DatasetIo, MissingFileIsDataError) { EXPECT_THROW(read_dataset(std::string("/nonexistent/x.jsonl")), data_error); }
