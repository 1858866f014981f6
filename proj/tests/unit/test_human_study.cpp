#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "support/oracles.hpp"
#include "xvqa/data/generator.hpp"
#include "xvqa/study/human_study.hpp"

using namespace xvqa;
using namespace xvqa::study;

namespace {

std::vector<PredictionRecord> predictions_for(const data::Dataset& ds) {
    std::vector<PredictionRecord> out;
    for (const auto& ex : ds.examples) {
        std::vector<std::string> gold(ex.explanation_tokens.begin(), ex.explanation_tokens.end() - 1);
        out.push_back({ex.id, ex.top_answer() == "yes" ? "no" : ex.top_answer(), {"model", "says"}, ex.top_answer(), gold});
    }
    return out;
}

AnnotationResponse resp(const std::string& hit, Context c, const std::string& w, Choice ch) { return {hit, c, w, ch, ""}; }

} // namespace

TEST(Choice, ParseAndPrint) {
    for (auto c : kAllChoices) EXPECT_EQ(parse_choice(to_string(c)), c);
    EXPECT_THROW(parse_choice("MAYBE"), invalid_choice_error);
    EXPECT_THROW(parse_choice("yes"), invalid_choice_error);
    EXPECT_EQ(parse_context("predicted"), Context::predicted);
    EXPECT_THROW(parse_context("model"), std::invalid_argument);
}

TEST(MajorityVote, AgreesWithOracleOnAllTriples) {
    const auto triples = support::all_triples();
    ASSERT_EQ(triples.size(), 64u);
    std::size_t distinct = 0;
    for (const auto& t : triples) {
        auto want = support::oracle_vote(t);
        EXPECT_EQ(all_distinct(t), !want.has_value());
        if (want) {
            EXPECT_EQ(majority_vote(t), *want);
        } else {
            ++distinct;
            EXPECT_THROW(majority_vote(t), std::invalid_argument);
        }
    }
    EXPECT_EQ(distinct, 24u);  // 4 * 3 * 2
}

TEST(ConsensusFilter, KeepsDropsAndCountsIncomplete) {
    std::vector<AnnotationResponse> rs;
    const auto triples = support::all_triples();
    for (std::size_t i = 0; i < triples.size(); ++i)
        for (std::size_t w = 0; w < 3; ++w)
            rs.push_back(resp("h" + std::to_string(i), Context::predicted, "w" + std::to_string(w), triples[i][w]));
    rs.push_back(resp("partial", Context::predicted, "w0", Choice::YES));
    auto c = consensus_filter(group_responses(rs));
    EXPECT_EQ(c.kept.size(), 40u);
    EXPECT_EQ(c.discarded, 24u);
    EXPECT_EQ(c.incomplete, 1u);
    for (const auto& [key, t] : c.kept) EXPECT_TRUE(support::oracle_vote(t).has_value());
}

TEST(ResponseStore, RejectsDuplicatesFourthResponseAndUnknownHits) {
    ResponseStore s;
    s.set_known_hits({"h1"});
    EXPECT_EQ(s.record(resp("h1", Context::predicted, "a", Choice::YES)), 1u);
    EXPECT_THROW(s.record(resp("h1", Context::predicted, "a", Choice::NO)), duplicate_response_error);
    s.record(resp("h1", Context::predicted, "b", Choice::NO));
    s.record(resp("h1", Context::predicted, "c", Choice::NO));
    EXPECT_THROW(s.record(resp("h1", Context::predicted, "d", Choice::NO)), duplicate_response_error);
    EXPECT_NO_THROW(s.record(resp("h1", Context::ground_truth, "a", Choice::YES)));
    EXPECT_THROW(s.record(resp("h2", Context::predicted, "a", Choice::YES)), unknown_hit_error);
    EXPECT_EQ(s.size(), 4u);
    EXPECT_TRUE(s.has_answered("h1", Context::predicted, "b"));
    EXPECT_FALSE(s.has_answered("h1", Context::ground_truth, "b"));
    EXPECT_EQ(s.workers_for("h1"), (std::set<std::string>{"a", "b", "c"}));
}

TEST(ResponseStore, PersistsAndReplays) {
    const auto path = (std::filesystem::temp_directory_path() / "xvqa_store_test.jsonl").string();
    std::filesystem::remove(path);
    {
        ResponseStore s(path);
        s.record(resp("h1", Context::predicted, "a", Choice::YES));
        s.record(resp("h1", Context::ground_truth, "a", Choice::NOT_DETERMINED));
    }
    ResponseStore again(path);
    ASSERT_EQ(again.size(), 2u);
    EXPECT_EQ(again.responses()[1].choice, Choice::NOT_DETERMINED);
    EXPECT_THROW(again.record(resp("h1", Context::predicted, "a", Choice::NO)), duplicate_response_error);
    again.record(resp("h1", Context::predicted, "b", Choice::NO));
    EXPECT_EQ(ResponseStore(path).size(), 3u);
    std::filesystem::remove(path);
}

TEST(ResponseStore, CorruptLogIsDataError) {
    const auto path = (std::filesystem::temp_directory_path() / "xvqa_store_corrupt.jsonl").string();
    {
        std::ofstream out(path);
        out << "{\"hit_id\":\"h\",\"context\":\"predicted\",\"worker_id\":\"a\",\"choice\":\"BAD\"}\n";
    }
    EXPECT_THROW(ResponseStore{path}, data_error);
    std::filesystem::remove(path);
}

TEST(BuildHits, DeterministicSampleWithoutReplacement) {
    auto ds = data::generate_dataset(5, 60);
    auto preds = predictions_for(ds);
    auto a = build_hits(preds, ds, 20, 11);
    EXPECT_EQ(a, build_hits(preds, ds, 20, 11));
    EXPECT_NE(a, build_hits(preds, ds, 20, 12));
    std::set<std::string> ids;
    std::size_t flipped = 0;
    for (const auto& h : a) {
        EXPECT_TRUE(ids.insert(h.example_id).second);
        EXPECT_EQ(h.hit_id, hit_id_for(h.example_id));
        EXPECT_EQ(example_id_for(h.hit_id), h.example_id);
        EXPECT_NE(h.display_order[0], h.display_order[1]);
        flipped += h.display_order[0] == Context::ground_truth;
        EXPECT_EQ(h.ground_truth.explanation.size() + 1,
                  std::find_if(ds.examples.begin(), ds.examples.end(), [&](auto& e) { return e.id == h.example_id; })
                      ->explanation_tokens.size());
    }
    EXPECT_GT(flipped, 0u);
    EXPECT_LT(flipped, 20u);
    EXPECT_THROW(build_hits(preds, ds, 61, 1), std::invalid_argument);
    EXPECT_THROW(build_hits(preds, ds, 0, 1), std::invalid_argument);
}

TEST(BuildHits, ExpectedResponseCount) {
    EXPECT_EQ(expected_response_count(4735), 14205u);
    EXPECT_EQ(expected_response_count(10, 3), 30u);
}

TEST(Hits, JsonRoundTripAndBlindPayload) {
    auto ds = data::generate_dataset(6, 10);
    auto hits = build_hits(predictions_for(ds), ds, 5, 3);
    std::stringstream ss;
    write_hits(hits, ss);
    EXPECT_EQ(read_hits(ss), hits);
    for (const auto& h : hits) {
        auto p = hit_payload(h);
        const auto text = p.dump();
        EXPECT_EQ(text.find("predicted"), std::string::npos);
        EXPECT_EQ(text.find("ground_truth"), std::string::npos);
        EXPECT_EQ(text.find("display_order"), std::string::npos);
        ASSERT_EQ(p.at("contexts").size(), 2u);
        EXPECT_EQ(p["contexts"][0]["answer"], h.content(h.display_order[0]).answer);
    }
    std::istringstream bad("{\"hit_id\":\"x\"}\n");
    EXPECT_THROW(read_hits(bad), data_error);
}

TEST(StudyReport, EngineeredStoreReproducesPublishedIdentity) {
    const auto s = support::engineered_study();
    using E = support::EngineeredStudy;
    ASSERT_EQ(s.hits.size(), E::kHits);
    EXPECT_EQ(s.responses.size(), 2 * expected_response_count(E::kHits));
    const auto rep = study_report(s.responses, s.hits);
    const auto& p = rep.at(Context::predicted);
    EXPECT_EQ(p.discarded, E::kDiscarded);
    EXPECT_EQ(p.unique.total(), E::kKept);
    EXPECT_EQ(p.unique.counts[0], E::kYes);
    EXPECT_EQ(p.crosstab.valid_correct, E::kValidCorrect);
    EXPECT_EQ(p.crosstab.valid_wrong, E::kValidWrong);
    EXPECT_EQ(p.crosstab.invalid_correct, E::kInvalidCorrect);
    EXPECT_EQ(p.crosstab.invalid_wrong, E::kInvalidWrong);
    // valid column sums to the unique YES share, before any rounding
    EXPECT_DOUBLE_EQ(p.crosstab.fraction(p.crosstab.valid_correct) + p.crosstab.fraction(p.crosstab.valid_wrong),
                     p.unique.fraction(Choice::YES));
    EXPECT_EQ(p.crosstab.valid_correct + p.crosstab.valid_wrong, p.unique.counts[0]);
    EXPECT_EQ(percent2(p.unique.fraction(Choice::YES)), 65.16);
    EXPECT_EQ(percent2(p.crosstab.fraction(p.crosstab.valid_correct)), 56.39);
    EXPECT_EQ(percent2(p.crosstab.fraction(p.crosstab.valid_wrong)), 8.77);
    EXPECT_EQ(percent2(p.crosstab.fraction(p.crosstab.invalid_correct)), 23.77);
    EXPECT_EQ(percent2(p.unique.fraction(Choice::NO)), 32.80);
    EXPECT_EQ(percent2(p.unique.fraction(Choice::NOT_DETERMINED)), 0.03);
    // raw counts include the dissenting votes
    EXPECT_EQ(p.raw.total(), 3 * E::kHits);
}

TEST(StudyReport, JsonSchemaAndEmptyStore) {
    const auto s = support::engineered_study();
    auto j = report_to_json(study_report(s.responses, s.hits));
    EXPECT_EQ(j.at("responses"), s.responses.size());
    for (const char* ctx : {"predicted", "ground_truth"}) {
        const auto& c = j.at(ctx);
        for (const char* k : {"total", "unique", "discarded", "incomplete", "crosstab"}) EXPECT_TRUE(c.contains(k)) << k;
        for (const char* ch : {"YES", "NO_BUT_CONTAINS", "NO", "NOT_DETERMINED"}) EXPECT_TRUE(c["unique"]["percent"].contains(ch));
    }
    EXPECT_THROW(study_report({}, s.hits), std::invalid_argument);
}

TEST(StudyReport, PredictionsAndDatasetResolveCorrectness) {
    auto ds = data::generate_dataset(7, 12);
    auto preds = predictions_for(ds);
    auto hits = build_hits(preds, ds, 6, 1);
    std::vector<AnnotationResponse> rs;
    for (const auto& h : hits)
        for (const char* w : {"a", "b", "c"}) rs.push_back(resp(h.hit_id, Context::predicted, w, Choice::YES));
    auto from_preds = study_report(rs, preds, ds);
    auto from_hits = study_report(rs, hits);
    const auto& x = from_preds.at(Context::predicted).crosstab;
    const auto& y = from_hits.at(Context::predicted).crosstab;
    EXPECT_EQ(x.valid_correct, y.valid_correct);
    EXPECT_EQ(x.valid_wrong, y.valid_wrong);
    std::size_t correct = 0;
    for (const auto& h : hits) correct += h.predicted.answer == h.ground_truth.answer;
    EXPECT_EQ(x.valid_correct, correct);
    for (const char* w : {"a", "b", "c"}) rs.push_back(resp("hit-missing", Context::predicted, w, Choice::YES));
    EXPECT_THROW(study_report(rs, hits), unknown_hit_error);
}
