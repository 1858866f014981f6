#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "xvqa/data/generator.hpp"
#include "xvqa/data/io.hpp"
#include "xvqa/data/vocabulary.hpp"
#include "xvqa/error.hpp"
#include "xvqa/metrics/text_metrics.hpp"
#include "xvqa/model/checkpoint.hpp"
#include "xvqa/study/human_study.hpp"
#include "xvqa/study/server.hpp"
#include "xvqa/train/trainer.hpp"
#include "xvqa/verify/gradient_suite.hpp"

// The `xvqa` command line: one binary, one subcommand per pipeline stage.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

namespace xvqa::cli {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

inline void configure_logging() {
    auto logger = spdlog::stderr_color_mt("xvqa");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* level = std::getenv("XVQA_LOG");
    const std::string l = level ? level : "info";
    if (l == "error") spdlog::set_level(spdlog::level::err);
    else if (l == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::set_level(spdlog::level::info);
}

/// "WxH" or a single N for an N x N grid.
inline std::pair<int, int> parse_grid(const std::string& s) {
    std::smatch m;
    if (std::regex_match(s, m, std::regex(R"((\d+)[xX](\d+))"))) return {std::stoi(m[1]), std::stoi(m[2])};
    if (std::regex_match(s, m, std::regex(R"((\d+))"))) return {std::stoi(m[1]), std::stoi(m[1])};
    throw std::invalid_argument("--grid expects WxH or N, got '" + s + "'");
}

template <class F>
void write_json_output(const nlohmann::json& j, const std::string& path, F&& human) {
    if (path.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        std::ofstream out(path);
        if (!out) throw data_error("cannot open '" + path + "' for writing");
        out << j.dump(2) << '\n';
        human();
    }
}

struct Options {
    // gen-data
    std::uint64_t gen_seed = 7;
    std::size_t gen_n = 1000;
    std::string gen_grid = "5x5";
    double gen_sigma = 0.05;
    std::string gen_out = "data.jsonl";
    // train
    std::string tr_data, tr_val, tr_out = "model.ckpt", tr_log;
    double tr_alpha = 0.5;
    std::string tr_decoder = "lstm";
    std::size_t tr_epochs = 10, tr_batch = 32, tr_dh = 768;
    double tr_lr = 1e-3;
    std::uint64_t tr_seed = 0;
    // eval
    std::string ev_ckpt, ev_data, ev_pred = "predictions.jsonl";
    // metrics
    std::string me_pred, me_out;
    // hits
    std::string hb_pred, hb_data, hb_out = "hits.jsonl";
    std::size_t hb_n = 100;
    std::uint64_t hb_seed = 0;
    std::string hs_hits, hs_store = "responses.jsonl";
    int hs_port = 8080;
    std::string hr_store, hr_pred, hr_data, hr_out;
    // grad-check
    double gc_tol = 1e-4;
};

inline int cmd_gen_data(const Options& o) {
    data::GeneratorConfig cfg;
    std::tie(cfg.width, cfg.height) = parse_grid(o.gen_grid);
    cfg.sigma = o.gen_sigma;
    const auto ds = data::generate_dataset(o.gen_seed, o.gen_n, cfg);
    data::write_dataset(ds, o.gen_out);
    std::cout << "wrote " << ds.size() << " examples (d = " << ds.feature_dim << ") to " << o.gen_out << '\n';
    return kOk;
}

inline int cmd_train(const Options& o) {
    train::TrainConfig cfg;
    cfg.alpha = o.tr_alpha;
    cfg.decoder = model::parse_decoder_kind(o.tr_decoder);
    cfg.epochs = o.tr_epochs;
    cfg.batch_size = o.tr_batch;
    cfg.learning_rate = o.tr_lr;
    cfg.seed = o.tr_seed;
    cfg.checkpoint_path = o.tr_out;
    cfg.d_h = o.tr_dh;
    cfg.validate();

    auto ds = data::read_dataset(o.tr_data);
    data::Dataset val;
    if (!o.tr_val.empty()) {
        val = data::read_dataset(o.tr_val);
    } else {
        // Hold out the last tenth.
        if (ds.size() < 2) throw data_error("training set too small to hold out a validation split");
        const std::size_t n_val = std::max<std::size_t>(1, ds.size() / 10);
        val.feature_dim = ds.feature_dim;
        val.examples.assign(ds.examples.end() - std::ptrdiff_t(n_val), ds.examples.end());
        ds.examples.resize(ds.size() - n_val);
        spdlog::info("no --val given; holding out the last {} examples", n_val);
    }
    if (val.feature_dim != ds.feature_dim) throw data_error("validation feature dim differs from training data");

    const auto vocab = data::Vocabulary::build(ds);
    auto m = model::make_model<float>(vocab, ds.feature_dim, cfg.d_h, cfg.decoder, cfg.seed);
    spdlog::info("model: {} decoder, d_h {}, |V| {}, |A| {}, {} parameters", model::to_string(cfg.decoder), cfg.d_h,
                 vocab.size(), vocab.answer_count(), m.params.parameter_count());

    const std::string log_path = o.tr_log.empty() ? o.tr_out + ".log.jsonl" : o.tr_log;
    std::ofstream log(log_path);
    if (!log) throw data_error("cannot open epoch log '" + log_path + "'");
    const auto result = train::train(m, ds, &val, cfg, [&](const train::EpochLog& e) {
        log << e.to_json().dump() << '\n';
        log.flush();
    });
    std::cout << std::fixed << std::setprecision(4);
    std::cout << "epoch  loss      L_ans     L_expl    val_vqa   val_tok_acc\n";
    for (const auto& e : result.log) {
        std::cout << std::setw(5) << e.epoch << "  " << e.loss << "  " << e.loss_ans << "  " << e.loss_expl << "  "
                  << (e.val_vqa ? *e.val_vqa : 0.0) << "  " << (e.val_token_acc ? *e.val_token_acc : 0.0) << '\n';
    }
    std::cout << "best epoch " << result.best_epoch << " -> " << o.tr_out << " (log " << log_path << ")\n";
    return kOk;
}

inline int cmd_eval(const Options& o) {
    auto m = model::load_checkpoint<float>(o.ev_ckpt);
    const auto ds = data::read_dataset(o.ev_data);
    const auto r = train::evaluate(m, ds, true);
    train::write_predictions(r.predictions, o.ev_pred);
    std::cout << std::fixed << std::setprecision(4) << "examples     " << r.n << "\nVQA score    " << r.vqa
              << "\nmean L_expl  " << r.loss_expl << "\ntoken acc    " << r.token_accuracy << "\npredictions  "
              << o.ev_pred << '\n';
    return kOk;
}

inline int cmd_metrics(const Options& o) {
    const auto r = metrics::corpus_report(o.me_pred);
    write_json_output(r.to_json(), o.me_out, [&] {
        std::cout << std::fixed << std::setprecision(4) << "n " << r.n << "  BLEU-1 " << r.bleu1 << "  ROUGE-1 "
                  << r.rouge1_f << "  ROUGE-2 " << r.rouge2_f << "  ROUGE-L " << r.rougeL_f << '\n';
    });
    return kOk;
}

inline int cmd_hits_build(const Options& o) {
    const auto preds = study::read_predictions(o.hb_pred);
    const auto ds = data::read_dataset(o.hb_data);
    const auto hits = study::build_hits(preds, ds, o.hb_n, o.hb_seed);
    study::write_hits(hits, o.hb_out);
    std::cout << "wrote " << hits.size() << " HITs to " << o.hb_out << " (expecting "
              << study::expected_response_count(hits.size()) << " responses per context)\n";
    return kOk;
}

inline int cmd_hits_serve(const Options& o) {
    study::StudyService svc(study::read_hits(o.hs_hits), study::ResponseStore(o.hs_store));
    httplib::Server server;
    study::install_routes(server, svc);
    spdlog::info("serving on http://127.0.0.1:{}", o.hs_port);
    if (!server.listen("127.0.0.1", o.hs_port)) throw std::runtime_error("cannot listen on port " + std::to_string(o.hs_port));
    return kOk;
}

inline int cmd_hits_report(const Options& o) {
    study::ResponseStore store;
    {
        std::ifstream in(o.hr_store);
        if (!in) throw data_error("cannot open response store '" + o.hr_store + "'");
    }
    store = study::ResponseStore(o.hr_store);
    const auto preds = study::read_predictions(o.hr_pred);
    const auto ds = data::read_dataset(o.hr_data);
    const auto rep = study::study_report(store.responses(), preds, ds);
    write_json_output(study::report_to_json(rep), o.hr_out, [&] {
        std::cout << std::fixed << std::setprecision(2);
        for (auto ctx : {study::Context::predicted, study::Context::ground_truth}) {
            const auto& c = rep.at(ctx);
            std::cout << study::to_string(ctx) << ": responses " << c.raw.total() << ", kept " << c.unique.total()
                      << ", discarded " << c.discarded << ", incomplete " << c.incomplete << '\n';
            for (auto ch : study::kAllChoices) {
                std::cout << "  " << std::left << std::setw(16) << study::to_string(ch) << std::right << " total "
                          << study::percent2(c.raw.fraction(ch)) << "%  unique " << study::percent2(c.unique.fraction(ch))
                          << "%\n";
            }
        }
    });
    return kOk;
}

inline int cmd_grad_check(const Options& o) {
    bool ok = true;
    std::cout << std::scientific << std::setprecision(3);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto cases = verify::primitive_gradient_suite(seed, o.gc_tol);
        cases.push_back(verify::end_to_end_gradient_case(seed, model::DecoderKind::lstm, o.gc_tol));
        cases.push_back(verify::end_to_end_gradient_case(seed, model::DecoderKind::transformer, o.gc_tol));
        for (const auto& c : cases) {
            ok = ok && c.report.passed;
            if (!c.report.passed || seed == 0) {
                std::cout << (c.report.passed ? "pass " : "FAIL ") << "seed " << seed << "  " << std::left << std::setw(24)
                          << c.name << std::right << " max rel err " << c.report.max_relative_error << '\n';
            }
        }
    }
    std::cout << (ok ? "all gradient checks passed" : "gradient check FAILED") << " (tol " << o.gc_tol << ")\n";
    return ok ? kOk : kNumerical;
}

inline int run(int argc, char** argv) {
    configure_logging();
    CLI::App app{"xvqa: explainable VQA on a synthetic grid world"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset (JSONL)");
    gen->add_option("--seed", o.gen_seed, "RNG seed")->capture_default_str();
    gen->add_option("--n", o.gen_n, "Number of examples")->capture_default_str()->check(CLI::PositiveNumber);
    gen->add_option("--grid", o.gen_grid, "Grid size WxH or N")->capture_default_str();
    gen->add_option("--sigma", o.gen_sigma, "Feature noise standard deviation")->capture_default_str()->check(CLI::NonNegativeNumber);
    gen->add_option("--out", o.gen_out, "Output dataset path")->capture_default_str();

    auto* tr = app.add_subcommand("train", "Train backbone + explanation decoder");
    tr->add_option("--data", o.tr_data, "Training dataset")->required();
    tr->add_option("--val", o.tr_val, "Validation dataset (default: hold out the last 10%)");
    tr->add_option("--alpha", o.tr_alpha, "Balance factor alpha in [0, 1]")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    tr->add_option("--decoder", o.tr_decoder, "Explanation decoder")->capture_default_str()->check(CLI::IsMember({"lstm", "transformer"}));
    tr->add_option("--epochs", o.tr_epochs, "Epochs")->capture_default_str()->check(CLI::PositiveNumber);
    tr->add_option("--batch", o.tr_batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
    tr->add_option("--lr", o.tr_lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    tr->add_option("--seed", o.tr_seed, "Initialization and shuffle seed")->capture_default_str();
    tr->add_option("--out", o.tr_out, "Checkpoint path (best validation epoch)")->capture_default_str();
    tr->add_option("--dh", o.tr_dh, "Hidden / joint dimension d_h")->capture_default_str()->check(CLI::PositiveNumber);
    tr->add_option("--log", o.tr_log, "Epoch log JSONL (default: <out>.log.jsonl)");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint and export predictions");
    ev->add_option("--ckpt", o.ev_ckpt, "Checkpoint")->required();
    ev->add_option("--data", o.ev_data, "Dataset")->required();
    ev->add_option("--pred-out", o.ev_pred, "Predictions JSONL output")->capture_default_str();

    auto* me = app.add_subcommand("metrics", "BLEU-1 / ROUGE report over a predictions file");
    me->add_option("--pred", o.me_pred, "Predictions JSONL")->required();
    me->add_option("--out", o.me_out, "Report JSON path (default: standard output)");

    auto* hits = app.add_subcommand("hits", "Human-study tasks");
    hits->require_subcommand(1);
    auto* hb = hits->add_subcommand("build", "Sample HITs from predictions");
    hb->add_option("--pred", o.hb_pred, "Predictions JSONL")->required();
    hb->add_option("--data", o.hb_data, "Dataset")->required();
    hb->add_option("--n", o.hb_n, "Number of HITs")->capture_default_str()->check(CLI::PositiveNumber);
    hb->add_option("--seed", o.hb_seed, "Sampling seed")->capture_default_str();
    hb->add_option("--out", o.hb_out, "HIT JSONL output")->capture_default_str();
    auto* hs = hits->add_subcommand("serve", "Serve the annotation API and UI");
    hs->add_option("--hits", o.hs_hits, "HIT JSONL")->required();
    hs->add_option("--store", o.hs_store, "Append-only response store")->capture_default_str();
    hs->add_option("--port", o.hs_port, "TCP port")->capture_default_str()->check(CLI::Range(1, 65535));
    auto* hr = hits->add_subcommand("report", "Summarize collected responses");
    hr->add_option("--store", o.hr_store, "Response store")->required();
    hr->add_option("--pred", o.hr_pred, "Predictions JSONL")->required();
    hr->add_option("--data", o.hr_data, "Dataset")->required();
    hr->add_option("--out", o.hr_out, "Report JSON path (default: standard output)");

    auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient checks");
    gc->add_option("--tol", o.gc_tol, "Relative error tolerance")->capture_default_str()->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*gen) return cmd_gen_data(o);
        if (*tr) return cmd_train(o);
        if (*ev) return cmd_eval(o);
        if (*me) return cmd_metrics(o);
        if (*hb) return cmd_hits_build(o);
        if (*hs) return cmd_hits_serve(o);
        if (*hr) return cmd_hits_report(o);
        if (*gc) return cmd_grad_check(o);
    } catch (const numerical_error& e) {
        spdlog::error("numerical failure: {}", e.what());
        return kNumerical;
    } catch (const data_error& e) {
        spdlog::error("data error: {}", e.what());
        return kData;
    } catch (const shape_error& e) {
        spdlog::error("data error: {}", e.what());
        return kData;
    } catch (const nlohmann::json::exception& e) {
        spdlog::error("data error: {}", e.what());
        return kData;
    } catch (const std::invalid_argument& e) {
        spdlog::error("usage error: {}", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        spdlog::error("data error: {}", e.what());
        return kData;
    }
    return kUsage;
}

} // namespace xvqa::cli
