#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "xvqa/data/types.hpp"
#include "xvqa/data/vocabulary.hpp"
#include "xvqa/error.hpp"
#include "xvqa/model/checkpoint.hpp"
#include "xvqa/model/model.hpp"

namespace xvqa::train {

using model::DecoderKind;
using model::EncodedExample;
using model::Model;

struct TrainConfig {
    double alpha = 0.5;
    DecoderKind decoder = DecoderKind::lstm;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    std::string checkpoint_path;    ///< empty: keep the best model in memory only
    std::size_t eval_every = 1;     ///< validation cadence in epochs
    ad::OptimizerKind optimizer = ad::OptimizerKind::adam;
    std::size_t d_h = 768;

    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0)) {
            throw std::invalid_argument("alpha must lie in [0, 1], got " + std::to_string(alpha));
        }
        if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
        if (eval_every < 1) throw std::invalid_argument("evaluation cadence must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
        if (d_h == 0) throw std::invalid_argument("d_h must be positive");
    }
};

/// min(#annotators giving `predicted` / 3, 1).
inline double vqa_score(const std::string& predicted, const std::vector<data::AnswerCount>& answers) {
    if (answers.empty()) throw std::invalid_argument("vqa_score: empty annotation list");
    int matches = 0;
    for (const auto& a : answers)
        if (a.answer == predicted) matches += a.count;
    return std::min(double(matches) / 3.0, 1.0);
}

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0, loss_ans = 0, loss_expl = 0;
    std::optional<double> val_vqa;        ///< x100
    std::optional<double> val_token_acc;  ///< in [0, 1]

    nlohmann::json to_json() const {
        nlohmann::json j = {{"epoch", epoch}, {"loss", loss}, {"loss_ans", loss_ans}, {"loss_expl", loss_expl}};
        j["val_vqa"] = val_vqa ? nlohmann::json(*val_vqa) : nlohmann::json(nullptr);
        j["val_token_acc"] = val_token_acc ? nlohmann::json(*val_token_acc) : nlohmann::json(nullptr);
        return j;
    }

    friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct Prediction {
    std::string id;
    std::int32_t answer_label = 0;
    std::string answer;
    std::vector<std::string> explanation;
    std::vector<float> answer_logits;
    std::string gold_answer;
    std::vector<std::string> gold_explanation;

    nlohmann::json to_json() const {
        return {{"id", id},
                {"answer", answer},
                {"answer_label", answer_label},
                {"explanation", explanation},
                {"answer_logits", answer_logits},
                {"gold_answer", gold_answer},
                {"gold_explanation", gold_explanation}};
    }
};

struct EvalResult {
    double vqa = 0;             ///< mean VQA score x100
    double loss_expl = 0;       ///< mean teacher-forced L_expl
    double token_accuracy = 0;  ///< teacher-forced argmax accuracy over gold tokens
    std::size_t n = 0;
    std::vector<Prediction> predictions;  ///< filled when decoding was requested
};

/// Runs the model over `ds`. With `decode` set, greedy explanations are
/// produced for every example as well.
template <class T>
EvalResult evaluate(Model<T>& m, const data::Dataset& ds, bool decode = false) {
    if (ds.empty()) throw std::invalid_argument("evaluate: empty dataset");
    if (ds.feature_dim != m.config.backbone.d_in) {
        throw shape_error("evaluate: dataset feature dim " + std::to_string(ds.feature_dim) +
                          " does not match checkpoint d_in " + std::to_string(m.config.backbone.d_in));
    }
    EvalResult r;
    r.n = ds.size();
    double vqa = 0, lexpl = 0;
    std::size_t correct = 0, total = 0;
    for (const auto& ex : ds.examples) {
        const auto enc = model::encode_example(ex, m.vocab);
        ad::Tape<T> tape(false);
        auto f = model::forward_example(tape, m, enc);
        const auto label = f.backbone.answer.label;
        const auto& answer = m.vocab.answer(label);
        vqa += vqa_score(answer, ex.answers);
        lexpl += double(model::explanation_loss(f.explanation.logits, f.explanation.targets).item());
        correct += model::count_correct_tokens(f.explanation.logits, f.explanation.targets);
        total += f.explanation.targets.size();
        if (decode) {
            Prediction p;
            p.id = ex.id;
            p.answer_label = label;
            p.answer = answer;
            auto joint = f.backbone.joint.value();
            p.explanation = m.vocab.decode(model::decode_greedy(m.params, m.config.decoder, joint));
            auto logits = f.backbone.answer.logits.value();
            p.answer_logits.assign(logits.begin(), logits.end());
            p.gold_answer = ex.top_answer();
            for (const auto& t : ex.explanation_tokens)
                if (t != data::kPadToken && t != data::kBosToken && t != data::kEosToken) p.gold_explanation.push_back(t);
            r.predictions.push_back(std::move(p));
        }
    }
    r.vqa = 100.0 * vqa / double(r.n);
    r.loss_expl = lexpl / double(r.n);
    r.token_accuracy = total ? double(correct) / double(total) : 0.0;
    return r;
}

inline void write_predictions(const std::vector<Prediction>& preds, std::ostream& out) {
    for (const auto& p : preds) out << p.to_json().dump() << '\n';
}

inline void write_predictions(const std::vector<Prediction>& preds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    write_predictions(preds, out);
}

/// Per-epoch permutation, a pure function of (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(epoch), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

struct BatchStats {
    double loss = 0, loss_ans = 0, loss_expl = 0;
};

/// Accumulates the batch-mean gradient of the joint loss into the model's
/// parameter gradients (per-example backward, each scaled by 1/|batch|).
template <class T>
BatchStats accumulate_batch_gradients(Model<T>& m, std::span<const EncodedExample* const> batch, double alpha) {
    BatchStats s;
    const double inv = 1.0 / double(batch.size());
    for (const auto* ex : batch) {
        ad::Tape<T> tape;
        auto f = model::forward_example(tape, m, *ex);
        auto l = model::joint_loss(f.backbone.answer.logits, ex->answer_label, f.explanation.logits,
                                   std::span<const model::TokenId>(f.explanation.targets), alpha);
        tape.backward(ad::scale(l.total, inv));
        s.loss += double(l.total.item()) * inv;
        s.loss_ans += double(l.answer.item()) * inv;
        s.loss_expl += double(l.explanation.item()) * inv;
    }
    return s;
}

struct TrainResult {
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double best_metric = -1;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains `m` in place. When a validation set is given it is scored every
/// `eval_every` epochs and the best-scoring parameters are restored at the
/// end (and written to `checkpoint_path`, if set). Without validation the
/// last epoch is kept.
template <class T>
TrainResult train(Model<T>& m, const data::Dataset& train_ds, const data::Dataset* val_ds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (train_ds.empty()) throw std::invalid_argument("train: empty training set");
    if (train_ds.feature_dim != m.config.backbone.d_in) throw shape_error("train: dataset feature dim does not match model");
    const auto encoded = model::encode_dataset(train_ds, m.vocab);

    ad::Optimizer opt({cfg.optimizer, cfg.learning_rate});
    TrainResult result;
    std::optional<ad::ParameterStore<T>> best;
    const bool by_vqa = cfg.alpha >= 0.5;

    m.params.zero_grad();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto order = epoch_order(encoded.size(), cfg.seed, epoch);
        EpochLog log;
        log.epoch = epoch;
        std::vector<const EncodedExample*> batch;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
                batch.push_back(&encoded[order[i]]);
            const auto s = accumulate_batch_gradients(m, std::span<const EncodedExample* const>(batch), cfg.alpha);
            if (!std::isfinite(s.loss) || !m.params.grads_finite()) {
                throw numerical_error("non-finite loss or gradient in epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(batch_index) + " (first example '" + batch.front()->id + "')");
            }
            opt.step(m.params);
            const double w = double(batch.size());
            log.loss += s.loss * w;
            log.loss_ans += s.loss_ans * w;
            log.loss_expl += s.loss_expl * w;
        }
        const double n = double(encoded.size());
        log.loss /= n;
        log.loss_ans /= n;
        log.loss_expl /= n;

        if (val_ds && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
            const auto ev = evaluate(m, *val_ds);
            log.val_vqa = ev.vqa;
            log.val_token_acc = ev.token_accuracy;
            const double metric = by_vqa ? ev.vqa : ev.token_accuracy;
            if (metric > result.best_metric) {
                result.best_metric = metric;
                result.best_epoch = epoch;
                best = m.params.template cast<T>();
                if (!cfg.checkpoint_path.empty()) {
                    model::save_checkpoint(m, cfg.checkpoint_path, {{"best_epoch", epoch}, {"alpha", cfg.alpha}});
                }
            }
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        spdlog::info("epoch {} loss {:.5f} (ans {:.5f}, expl {:.6f}) val_vqa {} val_tok_acc {} [{:.1f}s]", epoch, log.loss,
                     log.loss_ans, log.loss_expl, log.val_vqa ? std::to_string(*log.val_vqa) : "-",
                     log.val_token_acc ? std::to_string(*log.val_token_acc) : "-", secs);
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    if (best) {
        for (auto& [name, t] : m.params) {
            auto src = best->get(name).values();
            std::copy(src.begin(), src.end(), t.values().begin());
        }
    } else {
        result.best_epoch = cfg.epochs;
        if (!cfg.checkpoint_path.empty()) {
            model::save_checkpoint(m, cfg.checkpoint_path, {{"best_epoch", cfg.epochs}, {"alpha", cfg.alpha}});
        }
    }
    return result;
}

} // namespace xvqa::train
