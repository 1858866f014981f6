#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "xvqa/data/types.hpp"

namespace xvqa::data {

/// Bundled function-word list (a subset of the usual English stop words).
inline const std::set<std::string>& default_stop_words() {
    static const std::set<std::string> words = {
        "a",    "an",   "the",   "is",    "are",  "was",   "were",  "be",   "been", "am",
        "of",   "in",   "on",    "at",    "to",   "for",   "with",  "by",   "from", "as",
        "and",  "or",   "but",   "if",    "then", "than",  "so",    "not",  "no",   "there",
        "what", "which", "who",  "whom",  "how",  "this",  "that",  "these", "those", "it",
        "its",  "do",   "does",  "did",   "any",  "some",  "can",   "here",
    };
    return words;
}

using TokenFrequencies = std::map<std::string, std::size_t>;

/// Question-token frequencies over a corpus split.
inline TokenFrequencies question_token_frequencies(const Dataset& ds) {
    TokenFrequencies freq;
    for (const auto& ex : ds.examples)
        for (const auto& tok : ex.question_tokens) ++freq[tok];
    return freq;
}

inline constexpr std::size_t kDefaultPredicateThreshold = 10;

/// Keeps tokens that are not stop words and occur at least `threshold` times
/// in the corpus. Order and duplicates are preserved.
inline std::vector<std::string> extract_question_predicates(const std::vector<std::string>& question_tokens,
                                                            const std::set<std::string>& stop_words,
                                                            const TokenFrequencies& corpus_frequencies,
                                                            std::size_t threshold = kDefaultPredicateThreshold) {
    std::vector<std::string> out;
    for (const auto& tok : question_tokens) {
        if (stop_words.count(tok)) continue;
        auto it = corpus_frequencies.find(tok);
        if (it == corpus_frequencies.end() || it->second < threshold) continue;
        out.push_back(tok);
    }
    return out;
}

/// Recomputes every example's question predicates against `frequencies`.
inline void assign_question_predicates(Dataset& ds, const TokenFrequencies& frequencies,
                                       std::size_t threshold = kDefaultPredicateThreshold) {
    for (auto& ex : ds.examples) {
        ex.question_predicates =
            extract_question_predicates(ex.question_tokens, default_stop_words(), frequencies, threshold);
    }
}

} // namespace xvqa::data
