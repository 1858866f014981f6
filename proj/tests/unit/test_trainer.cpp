#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "xvqa/data/generator.hpp"
#include "xvqa/train/trainer.hpp"

using namespace xvqa;
using namespace xvqa::train;

namespace {

model::DecoderConfig tiny_decoder() {
    model::DecoderConfig d;
    d.heads = 2;
    d.max_length = 24;
    return d;
}

TrainConfig quick_config() {
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 8;
    c.d_h = 8;
    return c;
}

} // namespace

TEST(VqaScore, MinOfCountOverThree) {
    std::vector<data::AnswerCount> a{{"yes", 2}, {"no", 8}};
    EXPECT_NEAR(vqa_score("yes", a), 2.0 / 3.0, 1e-15);
    EXPECT_EQ(vqa_score("no", a), 1.0);
    EXPECT_EQ(vqa_score("maybe", a), 0.0);
    EXPECT_NEAR(vqa_score("x", {{"x", 1}}), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(vqa_score("x", {{"x", 3}}), 1.0);
    EXPECT_THROW(vqa_score("x", {}), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
    auto c = quick_config();
    c.alpha = 1.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = quick_config();
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = quick_config();
    c.learning_rate = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = quick_config();
    c.alpha = 0.0;
    EXPECT_NO_THROW(c.validate());
    c.alpha = 1.0;
    EXPECT_NO_THROW(c.validate());
}

TEST(EpochOrder, DeterministicPermutation) {
    auto a = epoch_order(50, 7, 3);
    EXPECT_EQ(a, epoch_order(50, 7, 3));
    EXPECT_NE(a, epoch_order(50, 7, 4));
    EXPECT_NE(a, epoch_order(50, 8, 3));
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Train, IdenticalRunsProduceIdenticalLogs) {
    auto ds = data::generate_dataset(31, 48);
    auto [tr, val] = data::split_dataset(ds, 40);
    auto vocab = data::Vocabulary::build(ds);
    auto cfg = quick_config();
    auto run = [&] {
        auto m = model::make_model<float>(vocab, ds.feature_dim, cfg.d_h, cfg.decoder, cfg.seed, tiny_decoder());
        return train::train(m, tr, &val, cfg).log;
    };
    auto a = run(), b = run();
    ASSERT_EQ(a.size(), 2u);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a[0].to_json().dump(), b[0].to_json().dump());
}

TEST(Train, LossDecreasesOnTinySet) {
    auto ds = data::generate_dataset(32, 40);
    auto vocab = data::Vocabulary::build(ds);
    auto cfg = quick_config();
    cfg.epochs = 6;
    cfg.learning_rate = 3e-3;
    auto m = model::make_model<float>(vocab, ds.feature_dim, cfg.d_h, cfg.decoder, 0, tiny_decoder());
    auto r = train::train(m, ds, nullptr, cfg);
    EXPECT_LT(r.log.back().loss, r.log.front().loss);
    EXPECT_EQ(r.best_epoch, cfg.epochs);
    EXPECT_FALSE(r.log[0].val_vqa.has_value());
}

TEST(Train, LossComponentsCombineWithAlpha) {
    auto ds = data::generate_dataset(33, 24);
    auto vocab = data::Vocabulary::build(ds);
    auto cfg = quick_config();
    cfg.epochs = 1;
    cfg.alpha = 0.3;
    auto m = model::make_model<float>(vocab, ds.feature_dim, cfg.d_h, cfg.decoder, 0, tiny_decoder());
    auto e = train::train(m, ds, nullptr, cfg).log[0];
    EXPECT_NEAR(e.loss, 0.3 * e.loss_ans + 0.7 * e.loss_expl, 1e-5);
}

TEST(Train, BestValidationCheckpointIsWrittenAndRestored) {
    auto ds = data::generate_dataset(34, 60);
    auto [tr, val] = data::split_dataset(ds, 48);
    auto vocab = data::Vocabulary::build(ds);
    auto cfg = quick_config();
    cfg.epochs = 3;
    cfg.checkpoint_path = (std::filesystem::temp_directory_path() / "xvqa_trainer_best.ckpt").string();
    auto m = model::make_model<float>(vocab, ds.feature_dim, cfg.d_h, cfg.decoder, 0, tiny_decoder());
    auto r = train::train(m, tr, &val, cfg);
    ASSERT_GE(r.best_epoch, 1u);
    double best = -1;
    for (const auto& e : r.log) best = std::max(best, *e.val_vqa);
    EXPECT_DOUBLE_EQ(r.best_metric, best);
    nlohmann::json extra;
    auto loaded = model::load_checkpoint<float>(cfg.checkpoint_path, &extra);
    EXPECT_EQ(extra.at("best_epoch").get<std::size_t>(), r.best_epoch);
    for (const auto& [name, t] : m.params) EXPECT_EQ(loaded.params.get(name), t) << name;
    EXPECT_DOUBLE_EQ(evaluate(m, val).vqa, best);
    std::filesystem::remove(cfg.checkpoint_path);
}

TEST(Train, LowAlphaSelectsByTokenAccuracy) {
    auto ds = data::generate_dataset(35, 40);
    auto [tr, val] = data::split_dataset(ds, 32);
    auto vocab = data::Vocabulary::build(ds);
    auto cfg = quick_config();
    cfg.alpha = 0.2;
    cfg.epochs = 3;
    auto m = model::make_model<float>(vocab, ds.feature_dim, cfg.d_h, cfg.decoder, 0, tiny_decoder());
    auto r = train::train(m, tr, &val, cfg);
    double best = -1;
    for (const auto& e : r.log) best = std::max(best, *e.val_token_acc);
    EXPECT_DOUBLE_EQ(r.best_metric, best);
}

TEST(Train, NonFiniteParameterRaisesNumericalError) {
    auto ds = data::generate_dataset(36, 16);
    auto vocab = data::Vocabulary::build(ds);
    auto cfg = quick_config();
    auto m = model::make_model<float>(vocab, ds.feature_dim, cfg.d_h, cfg.decoder, 0, tiny_decoder());
    m.params.get("backbone/answer/b2")[0] = std::nanf("");
    try {
        train::train(m, ds, nullptr, cfg);
        FAIL() << "expected numerical_error";
    } catch (const numerical_error& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
    }
}

TEST(Train, RejectsMismatchedFeatureDim) {
    auto ds = data::generate_dataset(37, 16);
    auto vocab = data::Vocabulary::build(ds);
    auto cfg = quick_config();
    auto m = model::make_model<float>(vocab, ds.feature_dim + 1, cfg.d_h, cfg.decoder, 0, tiny_decoder());
    EXPECT_THROW(train::train(m, ds, nullptr, cfg), shape_error);
    EXPECT_THROW(evaluate(m, ds), shape_error);
}

TEST(Evaluate, UntrainedModelIsNearChanceOnBalancedYesNo) {
    data::GeneratorConfig gc;
    gc.question_types = {data::QuestionType::existence, data::QuestionType::spatial};
    auto ds = data::generate_dataset(38, 400, gc);
    auto vocab = data::Vocabulary::build(ds);
    ASSERT_EQ(vocab.answer_count(), 2u);
    double total = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto m = model::make_model<float>(vocab, ds.feature_dim, 8, model::DecoderKind::lstm, seed, tiny_decoder());
        auto r = evaluate(m, ds);
        EXPECT_GE(r.vqa, 35.0);
        EXPECT_LE(r.vqa, 65.0);
        total += r.vqa;
    }
    EXPECT_NEAR(total / 3.0, 50.0, 10.0);
}

TEST(Evaluate, DecodedPredictionsAreWellFormed) {
    auto ds = data::generate_dataset(39, 12);
    auto vocab = data::Vocabulary::build(ds);
    auto m = model::make_model<float>(vocab, ds.feature_dim, 8, model::DecoderKind::transformer, 0, tiny_decoder());
    auto r = evaluate(m, ds, true);
    ASSERT_EQ(r.predictions.size(), ds.size());
    std::stringstream ss;
    write_predictions(r.predictions, ss);
    std::string line;
    std::size_t n = 0;
    while (std::getline(ss, line)) {
        auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("id"), ds.examples[n].id);
        EXPECT_EQ(j.at("answer_logits").size(), vocab.answer_count());
        EXPECT_EQ(j.at("gold_answer"), ds.examples[n].top_answer());
        for (const auto& t : j.at("explanation")) EXPECT_NE(t.get<std::string>(), data::kEosToken);
        ++n;
    }
    EXPECT_EQ(n, ds.size());
    EXPECT_GE(r.token_accuracy, 0.0);
    EXPECT_LE(r.token_accuracy, 1.0);
}
