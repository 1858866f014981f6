#include <gtest/gtest.h>

#include <sstream>

#include "support/oracles.hpp"
#include "xvqa/metrics/text_metrics.hpp"

using namespace xvqa;
using namespace xvqa::metrics;

TEST(Bleu1, IdentityDisjointAndClipping) {
    const Tokens s{"the", "red", "cup"};
    EXPECT_EQ(bleu1(s, s), 1.0);
    EXPECT_EQ(bleu1({"blue", "box"}, s), 0.0);
    EXPECT_NEAR(bleu1({"the", "the", "the"}, {"the", "cat"}), 1.0 / 3.0, 1e-9);
    EXPECT_EQ(bleu1({}, s), 0.0);
}

TEST(Bleu1, BrevityPenaltyForShortCandidates) {
    // c = 2, r = 4, all candidate tokens match: BP = exp(1 - 4/2)
    EXPECT_NEAR(bleu1({"a", "b"}, {"a", "b", "c", "d"}), std::exp(-1.0), 1e-12);
}

TEST(RougeN, HandCasesAndShortInputs) {
    const Tokens s{"a", "b", "c"};
    EXPECT_EQ(rouge_n(s, s, 1), 1.0);
    EXPECT_EQ(rouge_n(s, s, 2), 1.0);
    EXPECT_NEAR(rouge_n({"a", "red", "stop", "sign"}, {"the", "red", "stop", "sign", "on", "road"}, 1), 0.6, 1e-9);
    // bigrams: cand {red stop, stop sign, a red}, ref has red stop, stop sign -> P 2/3, R 2/5
    EXPECT_NEAR(rouge_n({"a", "red", "stop", "sign"}, {"the", "red", "stop", "sign", "on", "road"}, 2),
                2 * (2.0 / 3) * (2.0 / 5) / (2.0 / 3 + 2.0 / 5), 1e-12);
    EXPECT_EQ(rouge_n({"a"}, s, 2), 0.0);
    EXPECT_EQ(rouge_n({"x", "y"}, s, 1), 0.0);
    EXPECT_THROW(rouge_n(s, s, 0), std::invalid_argument);
}

TEST(RougeL, HandCases) {
    EXPECT_EQ(rouge_l({"a", "b"}, {"a", "b"}), 1.0);
    EXPECT_NEAR(rouge_l({"a", "b", "c"}, {"a", "c", "b"}), 2.0 / 3.0, 1e-9);
    EXPECT_EQ(rouge_l({"a"}, {"b"}), 0.0);
    EXPECT_EQ(rouge_l({}, {"b"}), 0.0);
}

TEST(RougeL, AgreesWithBruteForceOracle) {
    std::size_t pairs = 0;
    support::for_each_sequence_pair({"a", "b", "c"}, 8, [&](const Tokens& a, const Tokens& b) {
        ASSERT_EQ(lcs_length(a, b), support::brute_force_lcs(a, b));
        ASSERT_EQ(rouge_l(a, b), support::brute_force_rouge_l(a, b));
        ++pairs;
    });
    EXPECT_GT(pairs, 10000u);
}

TEST(Metrics, BoundedAndPure) {
    support::for_each_sequence_pair({"x", "y"}, 7, [](const Tokens& a, const Tokens& b) {
        for (double v : {bleu1(a, b), rouge_n(a, b, 1), rouge_n(a, b, 2), rouge_l(a, b)}) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
        ASSERT_EQ(rouge_l(a, b), rouge_l(a, b));
    });
}

TEST(CorpusReport, MacroAverageOfHandScores) {
    std::vector<std::pair<Tokens, Tokens>> pairs{
        {{"the", "the", "the"}, {"the", "cat"}},
        {{"a", "b", "c"}, {"a", "c", "b"}},
    };
    auto r = corpus_report(pairs);
    EXPECT_EQ(r.n, 2u);
    EXPECT_NEAR(r.bleu1, (1.0 / 3.0 + 1.0) / 2.0, 1e-9);
    // rouge1: pair 1 overlap 1, P 1/3, R 1/2 -> 0.4; pair 2 -> 1
    EXPECT_NEAR(r.rouge1_f, (0.4 + 1.0) / 2.0, 1e-9);
    // rouge2: pair 1 bigram "the the" vs "the cat" -> 0; pair 2 no shared bigram -> 0
    EXPECT_NEAR(r.rouge2_f, 0.0, 1e-12);
    EXPECT_NEAR(r.rougeL_f, (0.4 + 2.0 / 3.0) / 2.0, 1e-9);
}

TEST(CorpusReport, LowercasesTokens) {
    auto r = corpus_report({{{"The", "CUP"}, {"the", "cup"}}});
    EXPECT_EQ(r.bleu1, 1.0);
}

TEST(CorpusReport, IdentityFileScoresOne) {
    std::istringstream in("{\"explanation\":[\"a\",\"b\"],\"gold_explanation\":[\"a\",\"b\"]}\n\n"
                          "{\"explanation\":[\"c\",\"d\",\"e\"],\"gold_explanation\":[\"c\",\"d\",\"e\"]}\n");
    auto r = corpus_report(in);
    EXPECT_EQ(r.n, 2u);
    EXPECT_EQ(r.bleu1, 1.0);
    EXPECT_EQ(r.rouge2_f, 1.0);
    EXPECT_EQ(r.rougeL_f, 1.0);
    auto j = r.to_json();
    for (const char* k : {"bleu1", "rouge1_f", "rouge2_f", "rougeL_f", "n"}) EXPECT_TRUE(j.contains(k)) << k;
}

TEST(CorpusReport, MalformedLineReportsLineNumber) {
    std::istringstream in("{\"explanation\":[\"a\"],\"gold_explanation\":[\"a\"]}\n{\"explanation\":[\"a\"]}\n");
    try {
        corpus_report(in);
        FAIL() << "expected data_error";
    } catch (const data_error& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    std::istringstream empty_gold("{\"explanation\":[\"a\"],\"gold_explanation\":[]}\n");
    EXPECT_THROW(corpus_report(empty_gold), data_error);
    std::istringstream nothing("");
    EXPECT_THROW(corpus_report(nothing), data_error);
}
