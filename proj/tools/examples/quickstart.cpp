// Generate a small synthetic set, train a tiny model for a few epochs, then
// score answers and greedy explanations on held-out examples.

#include <iostream>

#include "xvqa/data/generator.hpp"
#include "xvqa/metrics/text_metrics.hpp"
#include "xvqa/train/trainer.hpp"

int main() {
    using namespace xvqa;
    const auto all = data::generate_dataset(/*seed=*/1, /*n=*/600);
    const auto [train_set, val_set] = data::split_dataset(all, 500);
    const auto vocab = data::Vocabulary::build(train_set);

    train::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.d_h = 32;
    auto m = model::make_model<float>(vocab, train_set.feature_dim, cfg.d_h, model::DecoderKind::lstm, cfg.seed);
    train::train(m, train_set, &val_set, cfg, [](const train::EpochLog& e) {
        std::cout << "epoch " << e.epoch << "  loss " << e.loss << "  val VQA " << e.val_vqa.value_or(0) << '\n';
    });

    const auto r = train::evaluate(m, val_set, /*decode=*/true);
    std::vector<std::pair<metrics::Tokens, metrics::Tokens>> pairs;
    for (const auto& p : r.predictions) pairs.emplace_back(p.explanation, p.gold_explanation);
    const auto scores = metrics::corpus_report(pairs);
    std::cout << "VQA " << r.vqa << "  token acc " << r.token_accuracy << "  BLEU-1 " << scores.bleu1 << "  ROUGE-L "
              << scores.rougeL_f << '\n';
    const auto& first = r.predictions.front();
    std::cout << "example " << first.id << ": " << first.answer << " because";
    for (const auto& w : first.explanation) std::cout << ' ' << w;
    std::cout << '\n';
}
