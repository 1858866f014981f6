#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xvqa/error.hpp"

// Single-reference string-match metrics over token lists.

namespace xvqa::metrics {

using Tokens = std::vector<std::string>;

namespace detail {

inline std::map<Tokens, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
    std::map<Tokens, std::size_t> out;
    if (t.size() < n || n == 0) return out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + std::ptrdiff_t(i), t.begin() + std::ptrdiff_t(i + n))];
    return out;
}

inline double f1(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

} // namespace detail

/// Clipped unigram precision times brevity penalty.
inline double bleu1(const Tokens& candidate, const Tokens& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const auto cand = detail::ngram_counts(candidate, 1);
    const auto ref = detail::ngram_counts(reference, 1);
    std::size_t clipped = 0;
    for (const auto& [g, c] : cand) {
        auto it = ref.find(g);
        if (it != ref.end()) clipped += std::min(c, it->second);
    }
    const double c = double(candidate.size()), r = double(reference.size());
    const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return bp * double(clipped) / c;
}

/// ROUGE-N F1 from clipped n-gram overlap.
inline double rouge_n(const Tokens& candidate, const Tokens& reference, std::size_t n) {
    if (n == 0) throw std::invalid_argument("rouge_n: n must be positive");
    if (candidate.size() < n || reference.size() < n) return 0.0;
    const auto cand = detail::ngram_counts(candidate, n);
    const auto ref = detail::ngram_counts(reference, n);
    std::size_t overlap = 0;
    for (const auto& [g, c] : cand) {
        auto it = ref.find(g);
        if (it != ref.end()) overlap += std::min(c, it->second);
    }
    const double p = double(overlap) / double(candidate.size() - n + 1);
    const double r = double(overlap) / double(reference.size() - n + 1);
    return detail::f1(p, r);
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// ROUGE-L F1 from the longest common subsequence.
inline double rouge_l(const Tokens& candidate, const Tokens& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const double lcs = double(lcs_length(candidate, reference));
    return detail::f1(lcs / double(candidate.size()), lcs / double(reference.size()));
}

struct MetricReport {
    double bleu1 = 0, rouge1_f = 0, rouge2_f = 0, rougeL_f = 0;
    std::size_t n = 0;

    nlohmann::json to_json() const {
        return {{"bleu1", bleu1}, {"rouge1_f", rouge1_f}, {"rouge2_f", rouge2_f}, {"rougeL_f", rougeL_f}, {"n", n}};
    }
};

inline Tokens lowercase(Tokens t) {
    for (auto& s : t)
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return t;
}

/// Macro average over (candidate, reference) pairs.
inline MetricReport corpus_report(const std::vector<std::pair<Tokens, Tokens>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("corpus_report: no examples");
    MetricReport r;
    for (const auto& [c0, g0] : pairs) {
        const auto c = lowercase(c0), g = lowercase(g0);
        r.bleu1 += bleu1(c, g);
        r.rouge1_f += rouge_n(c, g, 1);
        r.rouge2_f += rouge_n(c, g, 2);
        r.rougeL_f += rouge_l(c, g);
    }
    r.n = pairs.size();
    const double n = double(r.n);
    r.bleu1 /= n;
    r.rouge1_f /= n;
    r.rouge2_f /= n;
    r.rougeL_f /= n;
    return r;
}

/// Reads a predictions JSONL stream ("explanation" vs "gold_explanation").
inline MetricReport corpus_report(std::istream& in) {
    std::vector<std::pair<Tokens, Tokens>> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            auto gold = j.at("gold_explanation").get<Tokens>();
            if (gold.empty()) throw data_error("empty gold explanation", lineno);
            pairs.emplace_back(j.at("explanation").get<Tokens>(), std::move(gold));
        } catch (const nlohmann::json::exception& e) {
            throw data_error(std::string("malformed prediction record: ") + e.what(), lineno);
        }
    }
    if (pairs.empty()) throw data_error("predictions file has no records");
    return corpus_report(pairs);
}

inline MetricReport corpus_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open predictions '" + path + "'");
    return corpus_report(in);
}

} // namespace xvqa::metrics
