#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "xvqa/data/types.hpp"
#include "xvqa/error.hpp"

namespace xvqa::data {

/// Word vocabulary with reserved ids plus the dense answer label set.
class Vocabulary {
public:
    static constexpr std::int32_t pad = 0;
    static constexpr std::int32_t bos = 1;
    static constexpr std::int32_t eos = 2;
    static constexpr std::int32_t unk = 3;

    Vocabulary() { reset_words({}); }

    Vocabulary(const std::vector<std::string>& words, const std::vector<std::string>& answers) {
        reset_words(words);
        for (const auto& a : answers) add_answer(a);
    }

    /// Words are taken from questions, explanations, and both predicate lists;
    /// answers are kept when they occur in at least `answer_freq_threshold`
    /// examples. Both lists are sorted so ids do not depend on example order.
    static Vocabulary build(const Dataset& ds, std::size_t answer_freq_threshold = 1) {
        if (ds.empty()) throw std::invalid_argument("build_vocabulary: dataset is empty");
        std::set<std::string> words;
        std::map<std::string, std::size_t> answer_freq;
        for (const auto& ex : ds.examples) {
            for (const auto* list : {&ex.question_tokens, &ex.explanation_tokens, &ex.image_predicates,
                                     &ex.question_predicates}) {
                words.insert(list->begin(), list->end());
            }
            std::set<std::string> seen;
            for (const auto& a : ex.answers)
                if (a.count > 0 && seen.insert(a.answer).second) ++answer_freq[a.answer];
        }
        std::vector<std::string> answers;
        for (const auto& [a, f] : answer_freq)
            if (f >= answer_freq_threshold) answers.push_back(a);
        if (answers.empty()) {
            throw data_error("build_vocabulary: answer set is empty after frequency threshold " +
                             std::to_string(answer_freq_threshold));
        }
        return Vocabulary(std::vector<std::string>(words.begin(), words.end()), answers);
    }

    std::size_t size() const noexcept { return tokens_.size(); }
    std::size_t answer_count() const noexcept { return answers_.size(); }

    std::int32_t id(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? unk : it->second;
    }

    bool contains(const std::string& token) const { return ids_.count(token) != 0; }

    const std::string& token(std::int32_t id) const {
        if (id < 0 || std::size_t(id) >= tokens_.size()) throw std::out_of_range("token id out of range");
        return tokens_[std::size_t(id)];
    }

    /// Dense label in [0, answer_count()), or -1 when the answer was filtered out.
    std::int32_t answer_label(const std::string& answer) const {
        auto it = answer_ids_.find(answer);
        return it == answer_ids_.end() ? -1 : it->second;
    }

    const std::string& answer(std::int32_t label) const {
        if (label < 0 || std::size_t(label) >= answers_.size()) throw std::out_of_range("answer label out of range");
        return answers_[std::size_t(label)];
    }

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::vector<std::string>& answers() const noexcept { return answers_; }

    std::vector<std::int32_t> encode(const std::vector<std::string>& toks) const {
        std::vector<std::int32_t> out;
        out.reserve(toks.size());
        for (const auto& t : toks) out.push_back(id(t));
        return out;
    }

    /// Drops PAD, BOS and EOS.
    std::vector<std::string> decode(const std::vector<std::int32_t>& ids) const {
        std::vector<std::string> out;
        for (auto i : ids)
            if (i != pad && i != bos && i != eos) out.push_back(token(i));
        return out;
    }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.tokens_ == b.tokens_ && a.answers_ == b.answers_;
    }

private:
    void reset_words(const std::vector<std::string>& words) {
        tokens_ = {kPadToken, kBosToken, kEosToken, kUnkToken};
        ids_.clear();
        for (std::size_t i = 0; i < tokens_.size(); ++i) ids_[tokens_[i]] = std::int32_t(i);
        for (const auto& w : words) {
            if (ids_.count(w)) continue;
            ids_[w] = std::int32_t(tokens_.size());
            tokens_.push_back(w);
        }
    }

    void add_answer(const std::string& a) {
        if (answer_ids_.count(a)) return;
        answer_ids_[a] = std::int32_t(answers_.size());
        answers_.push_back(a);
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> ids_;
    std::vector<std::string> answers_;
    std::unordered_map<std::string, std::int32_t> answer_ids_;
};

} // namespace xvqa::data
