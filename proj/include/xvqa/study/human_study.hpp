#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "xvqa/data/io.hpp"
#include "xvqa/data/types.hpp"
#include "xvqa/error.hpp"

// Two-context annotation tasks (HITs), an append-only response store, the
// three-worker consensus filter, mode voting, and the summary report.

namespace xvqa::study {

using nlohmann::json;

inline constexpr std::size_t kWorkersPerHit = 3;

enum class Context { predicted = 0, ground_truth = 1 };
enum class Choice { YES = 0, NO_BUT_CONTAINS = 1, NO = 2, NOT_DETERMINED = 3 };

inline constexpr std::array<Choice, 4> kAllChoices = {Choice::YES, Choice::NO_BUT_CONTAINS, Choice::NO,
                                                      Choice::NOT_DETERMINED};

struct invalid_choice_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct unknown_hit_error : std::out_of_range {
    using std::out_of_range::out_of_range;
};
/// Duplicate (hit, context, worker) or a (hit, context) that already holds
/// responses from three workers.
struct duplicate_response_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline const char* to_string(Choice c) {
    switch (c) {
    case Choice::YES: return "YES";
    case Choice::NO_BUT_CONTAINS: return "NO_BUT_CONTAINS";
    case Choice::NO: return "NO";
    case Choice::NOT_DETERMINED: return "NOT_DETERMINED";
    }
    return "?";
}

inline Choice parse_choice(const std::string& s) {
    for (auto c : kAllChoices)
        if (s == to_string(c)) return c;
    throw invalid_choice_error("invalid choice '" + s + "' (expected YES, NO_BUT_CONTAINS, NO or NOT_DETERMINED)");
}

inline const char* to_string(Context c) { return c == Context::predicted ? "predicted" : "ground_truth"; }

inline Context parse_context(const std::string& s) {
    if (s == "predicted") return Context::predicted;
    if (s == "ground_truth") return Context::ground_truth;
    throw std::invalid_argument("invalid context '" + s + "' (expected predicted or ground_truth)");
}

// ---------------------------------------------------------------------------
// HITs

struct ContextContent {
    std::string answer;
    std::vector<std::string> explanation;

    friend bool operator==(const ContextContent&, const ContextContent&) = default;
};

struct HitRecord {
    std::string hit_id;
    std::string example_id;
    std::vector<std::string> question_tokens;
    std::optional<data::Scene> scene;
    ContextContent predicted;
    ContextContent ground_truth;
    std::array<Context, 2> display_order{Context::predicted, Context::ground_truth};

    const ContextContent& content(Context c) const { return c == Context::predicted ? predicted : ground_truth; }

    friend bool operator==(const HitRecord&, const HitRecord&) = default;
};

inline std::string hit_id_for(const std::string& example_id) { return "hit-" + example_id; }

/// Inverse of hit_id_for; empty when the id does not follow the scheme.
inline std::string example_id_for(const std::string& hit_id) {
    return hit_id.rfind("hit-", 0) == 0 ? hit_id.substr(4) : std::string();
}

inline json hit_to_json(const HitRecord& h) {
    auto ctx = [](const ContextContent& c) { return json{{"answer", c.answer}, {"explanation", c.explanation}}; };
    return {{"hit_id", h.hit_id},
            {"example_id", h.example_id},
            {"question_tokens", h.question_tokens},
            {"scene", h.scene ? data::scene_to_json(*h.scene) : json(nullptr)},
            {"context_predicted", ctx(h.predicted)},
            {"context_ground_truth", ctx(h.ground_truth)},
            {"display_order", {to_string(h.display_order[0]), to_string(h.display_order[1])}}};
}

inline HitRecord hit_from_json(const json& j) {
    auto ctx = [](const json& c) {
        return ContextContent{c.at("answer").get<std::string>(), c.at("explanation").get<std::vector<std::string>>()};
    };
    HitRecord h;
    h.hit_id = j.at("hit_id").get<std::string>();
    h.example_id = j.at("example_id").get<std::string>();
    h.question_tokens = j.at("question_tokens").get<std::vector<std::string>>();
    if (j.contains("scene") && !j["scene"].is_null()) h.scene = data::scene_from_json(j["scene"]);
    h.predicted = ctx(j.at("context_predicted"));
    h.ground_truth = ctx(j.at("context_ground_truth"));
    const auto& order = j.at("display_order");
    if (!order.is_array() || order.size() != 2) throw data_error("hit '" + h.hit_id + "': display_order needs 2 entries");
    h.display_order = {parse_context(order[0].get<std::string>()), parse_context(order[1].get<std::string>())};
    if (h.display_order[0] == h.display_order[1]) throw data_error("hit '" + h.hit_id + "': display_order repeats a context");
    return h;
}

/// The annotator-facing view: contexts in display order, addressed only by
/// slot, with no field revealing which one is the model's.
inline json hit_payload(const HitRecord& h) {
    json contexts = json::array();
    for (std::size_t slot = 0; slot < 2; ++slot) {
        const auto& c = h.content(h.display_order[slot]);
        contexts.push_back({{"slot", slot}, {"answer", c.answer}, {"explanation", c.explanation}});
    }
    return {{"hit_id", h.hit_id},
            {"question_tokens", h.question_tokens},
            {"scene", h.scene ? data::scene_to_json(*h.scene) : json(nullptr)},
            {"contexts", std::move(contexts)}};
}

/// Minimal view of one predictions-file record.
struct PredictionRecord {
    std::string id;
    std::string answer;
    std::vector<std::string> explanation;
    std::string gold_answer;
    std::vector<std::string> gold_explanation;
};

inline std::vector<PredictionRecord> read_predictions(std::istream& in) {
    std::vector<PredictionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            out.push_back({j.at("id").get<std::string>(), j.at("answer").get<std::string>(),
                           j.at("explanation").get<std::vector<std::string>>(), j.at("gold_answer").get<std::string>(),
                           j.at("gold_explanation").get<std::vector<std::string>>()});
        } catch (const json::exception& e) {
            throw data_error(std::string("malformed prediction record: ") + e.what(), lineno);
        }
    }
    return out;
}

inline std::vector<PredictionRecord> read_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open predictions '" + path + "'");
    return read_predictions(in);
}

/// Samples n dataset examples that have predictions (uniformly, without
/// replacement) and draws a display order per HIT. Pure function of its inputs.
inline std::vector<HitRecord> build_hits(const std::vector<PredictionRecord>& preds, const data::Dataset& ds,
                                         std::size_t n, std::uint64_t seed) {
    std::unordered_map<std::string, const data::VqaExample*> by_id;
    for (const auto& ex : ds.examples) by_id.emplace(ex.id, &ex);
    std::vector<const PredictionRecord*> available;
    std::set<std::string> seen;
    for (const auto& p : preds)
        if (by_id.count(p.id) && seen.insert(p.id).second) available.push_back(&p);
    if (n == 0) throw std::invalid_argument("build_hits: n must be positive");
    if (n > available.size()) {
        throw std::invalid_argument("build_hits: requested " + std::to_string(n) + " HITs but only " +
                                    std::to_string(available.size()) + " examples have predictions");
    }
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first n entries become the sample.
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, available.size() - 1);
        std::swap(available[i], available[pick(rng)]);
    }
    std::vector<HitRecord> hits;
    hits.reserve(n);
    std::bernoulli_distribution flip(0.5);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = *available[i];
        const auto& ex = *by_id.at(p.id);
        HitRecord h;
        h.hit_id = hit_id_for(ex.id);
        h.example_id = ex.id;
        h.question_tokens = ex.question_tokens;
        h.scene = ex.scene;
        h.predicted = {p.answer, p.explanation};
        std::vector<std::string> gold;
        for (const auto& t : ex.explanation_tokens)
            if (t != data::kEosToken && t != data::kBosToken && t != data::kPadToken) gold.push_back(t);
        h.ground_truth = {ex.top_answer(), std::move(gold)};
        if (flip(rng)) h.display_order = {Context::ground_truth, Context::predicted};
        hits.push_back(std::move(h));
    }
    return hits;
}

inline std::size_t expected_response_count(std::size_t hits, std::size_t workers = kWorkersPerHit) {
    return hits * workers;
}

inline void write_hits(const std::vector<HitRecord>& hits, std::ostream& out) {
    for (const auto& h : hits) out << hit_to_json(h).dump() << '\n';
}

inline void write_hits(const std::vector<HitRecord>& hits, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    write_hits(hits, out);
}

inline std::vector<HitRecord> read_hits(std::istream& in) {
    std::vector<HitRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(hit_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw data_error(std::string("malformed HIT record: ") + e.what(), lineno);
        } catch (const std::invalid_argument& e) {
            throw data_error(e.what(), lineno);
        }
    }
    return out;
}

inline std::vector<HitRecord> read_hits(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open HIT file '" + path + "'");
    return read_hits(in);
}

// ---------------------------------------------------------------------------
// Responses

struct AnnotationResponse {
    std::string hit_id;
    Context context = Context::predicted;
    std::string worker_id;
    Choice choice = Choice::YES;
    std::string timestamp;

    friend bool operator==(const AnnotationResponse&, const AnnotationResponse&) = default;
};

inline json response_to_json(const AnnotationResponse& r) {
    return {{"hit_id", r.hit_id},
            {"context", to_string(r.context)},
            {"worker_id", r.worker_id},
            {"choice", to_string(r.choice)},
            {"timestamp", r.timestamp}};
}

inline AnnotationResponse response_from_json(const json& j) {
    AnnotationResponse r;
    r.hit_id = j.at("hit_id").get<std::string>();
    r.context = parse_context(j.at("context").get<std::string>());
    r.worker_id = j.at("worker_id").get<std::string>();
    r.choice = parse_choice(j.at("choice").get<std::string>());
    r.timestamp = j.value("timestamp", std::string());
    if (r.hit_id.empty() || r.worker_id.empty()) throw std::invalid_argument("response needs hit_id and worker_id");
    return r;
}

/// Append-only response log. With a backing path every accepted response is
/// written (and flushed) as one JSONL line before record() returns. Not
/// synchronized; callers serialize access.
class ResponseStore {
public:
    ResponseStore() = default;

    /// Opens (and replays) the log at `path`, creating it if absent.
    explicit ResponseStore(std::string path) : path_(std::move(path)) {
        std::ifstream in(path_);
        if (in) {
            std::string line;
            std::size_t lineno = 0;
            while (std::getline(in, line)) {
                ++lineno;
                if (line.empty()) continue;
                try {
                    insert(response_from_json(json::parse(line)));
                } catch (const json::exception& e) {
                    throw data_error(std::string("malformed response record: ") + e.what(), lineno);
                } catch (const std::exception& e) {
                    throw data_error(e.what(), lineno);
                }
            }
        }
        out_.open(path_, std::ios::app);
        if (!out_) throw data_error("cannot open response store '" + path_ + "'");
    }

    /// Restricts accepted hit ids; an empty set accepts any id.
    void set_known_hits(std::set<std::string> ids) { known_ = std::move(ids); }

    /// Validates and appends; returns the new store size.
    std::size_t record(const AnnotationResponse& r) {
        if (!known_.empty() && !known_.count(r.hit_id)) throw unknown_hit_error("unknown hit_id '" + r.hit_id + "'");
        insert(r);
        if (out_.is_open()) {
            out_ << response_to_json(r).dump() << '\n';
            out_.flush();
            if (!out_) throw data_error("failed appending to response store '" + path_ + "'");
        }
        return responses_.size();
    }

    const std::vector<AnnotationResponse>& responses() const noexcept { return responses_; }
    std::size_t size() const noexcept { return responses_.size(); }

    bool has_answered(const std::string& hit, Context c, const std::string& worker) const {
        return keys_.count({hit, int(c), worker}) != 0;
    }

    /// Distinct workers that answered at least one context of `hit`.
    std::set<std::string> workers_for(const std::string& hit) const {
        auto it = workers_.find(hit);
        return it == workers_.end() ? std::set<std::string>{} : it->second;
    }

private:
    void insert(const AnnotationResponse& r) {
        const auto key = std::make_tuple(r.hit_id, int(r.context), r.worker_id);
        if (keys_.count(key)) {
            throw duplicate_response_error("duplicate response for hit '" + r.hit_id + "', context " + to_string(r.context) +
                                           ", worker '" + r.worker_id + "'");
        }
        auto& n = group_sizes_[{r.hit_id, int(r.context)}];
        if (n >= kWorkersPerHit) {
            throw duplicate_response_error("hit '" + r.hit_id + "' context " + to_string(r.context) +
                                           " already has " + std::to_string(kWorkersPerHit) + " responses");
        }
        ++n;
        keys_.insert(key);
        workers_[r.hit_id].insert(r.worker_id);
        responses_.push_back(r);
    }

    std::string path_;
    std::ofstream out_;
    std::set<std::string> known_;
    std::vector<AnnotationResponse> responses_;
    std::set<std::tuple<std::string, int, std::string>> keys_;
    std::map<std::pair<std::string, int>, std::size_t> group_sizes_;
    std::map<std::string, std::set<std::string>> workers_;
};

// ---------------------------------------------------------------------------
// Aggregation

using Triple = std::array<Choice, 3>;

inline bool all_distinct(const Triple& t) { return t[0] != t[1] && t[0] != t[2] && t[1] != t[2]; }

/// The choice occurring at least twice. Throws for an all-distinct triple.
inline Choice majority_vote(const Triple& t) {
    if (t[0] == t[1] || t[0] == t[2]) return t[0];
    if (t[1] == t[2]) return t[1];
    throw std::invalid_argument("majority_vote: all three choices differ");
}

struct GroupKey {
    std::string hit_id;
    Context context;

    friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
};

struct ConsensusResult {
    std::vector<std::pair<GroupKey, Triple>> kept;
    std::size_t discarded = 0;
    std::size_t incomplete = 0;  ///< groups with fewer than 3 responses
};

/// Groups responses by (hit, context) in first-seen order; complete groups
/// are kept unless their three choices are pairwise distinct.
inline std::map<GroupKey, std::vector<Choice>> group_responses(const std::vector<AnnotationResponse>& rs) {
    std::map<GroupKey, std::vector<Choice>> groups;
    for (const auto& r : rs) groups[{r.hit_id, r.context}].push_back(r.choice);
    return groups;
}

inline ConsensusResult consensus_filter(const std::map<GroupKey, std::vector<Choice>>& groups) {
    ConsensusResult out;
    for (const auto& [key, choices] : groups) {
        if (choices.size() != 3) {
            ++out.incomplete;
            continue;
        }
        const Triple t{choices[0], choices[1], choices[2]};
        if (all_distinct(t)) {
            ++out.discarded;
        } else {
            out.kept.emplace_back(key, t);
        }
    }
    return out;
}

struct Distribution {
    std::array<std::size_t, 4> counts{};
    std::size_t total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
    double fraction(Choice c) const { return total() ? double(counts[std::size_t(c)]) / double(total()) : 0.0; }
};

struct CrossTab {
    std::size_t valid_correct = 0, valid_wrong = 0, invalid_correct = 0, invalid_wrong = 0;
    std::size_t total() const { return valid_correct + valid_wrong + invalid_correct + invalid_wrong; }
    double fraction(std::size_t v) const { return total() ? double(v) / double(total()) : 0.0; }
};

struct ContextReport {
    Distribution raw;     ///< every response ("total")
    Distribution unique;  ///< one majority vote per kept group
    std::size_t discarded = 0;
    std::size_t incomplete = 0;
    CrossTab crosstab;  ///< valid = majority YES, crossed with answer correctness
};

struct StudyReport {
    std::size_t responses = 0;
    std::array<ContextReport, 2> contexts;

    const ContextReport& at(Context c) const { return contexts[std::size_t(c)]; }
};

/// Percentage rounded to 2 decimals.
inline double percent2(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

/// `answer_correct(hit_id, context)` tells whether that context's answer
/// matches the gold answer.
inline StudyReport study_report(const std::vector<AnnotationResponse>& rs,
                                const std::function<bool(const std::string&, Context)>& answer_correct) {
    if (rs.empty()) throw std::invalid_argument("study_report: store is empty");
    StudyReport rep;
    rep.responses = rs.size();
    for (const auto& r : rs) ++rep.contexts[std::size_t(r.context)].raw.counts[std::size_t(r.choice)];
    const auto groups = group_responses(rs);
    const auto cons = consensus_filter(groups);
    for (const auto& [key, choices] : groups) {
        if (choices.size() != 3) {
            ++rep.contexts[std::size_t(key.context)].incomplete;
        } else if (all_distinct({choices[0], choices[1], choices[2]})) {
            ++rep.contexts[std::size_t(key.context)].discarded;
        }
    }
    for (const auto& [key, triple] : cons.kept) {
        auto& c = rep.contexts[std::size_t(key.context)];
        const Choice vote = majority_vote(triple);
        ++c.unique.counts[std::size_t(vote)];
        const bool valid = vote == Choice::YES;
        const bool correct = answer_correct(key.hit_id, key.context);
        (valid ? (correct ? c.crosstab.valid_correct : c.crosstab.valid_wrong)
               : (correct ? c.crosstab.invalid_correct : c.crosstab.invalid_wrong))++;
    }
    return rep;
}

inline StudyReport study_report(const std::vector<AnnotationResponse>& rs, const std::vector<HitRecord>& hits) {
    std::unordered_map<std::string, const HitRecord*> by_id;
    for (const auto& h : hits) by_id.emplace(h.hit_id, &h);
    return study_report(rs, [&](const std::string& id, Context c) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw unknown_hit_error("report: unknown hit_id '" + id + "'");
        return it->second->content(c).answer == it->second->ground_truth.answer;
    });
}

/// Correctness from the predictions file and dataset, resolving hit ids via
/// the "hit-<example id>" scheme.
inline StudyReport study_report(const std::vector<AnnotationResponse>& rs, const std::vector<PredictionRecord>& preds,
                                const data::Dataset& ds) {
    std::unordered_map<std::string, const PredictionRecord*> pred_by_id;
    for (const auto& p : preds) pred_by_id.emplace(p.id, &p);
    std::unordered_map<std::string, const data::VqaExample*> ex_by_id;
    for (const auto& ex : ds.examples) ex_by_id.emplace(ex.id, &ex);
    return study_report(rs, [&](const std::string& hit, Context c) {
        const auto id = example_id_for(hit);
        auto ex = ex_by_id.find(id);
        if (ex == ex_by_id.end()) throw unknown_hit_error("report: hit '" + hit + "' matches no dataset example");
        if (c == Context::ground_truth) return true;
        auto p = pred_by_id.find(id);
        if (p == pred_by_id.end()) throw unknown_hit_error("report: no prediction for example '" + id + "'");
        return p->second->answer == ex->second->top_answer();
    });
}

inline json distribution_json(const Distribution& d) {
    json counts = json::object(), pct = json::object();
    for (auto c : kAllChoices) {
        counts[to_string(c)] = d.counts[std::size_t(c)];
        pct[to_string(c)] = percent2(d.fraction(c));
    }
    return {{"n", d.total()}, {"counts", counts}, {"percent", pct}};
}

inline json report_to_json(const StudyReport& r) {
    json out = {{"responses", r.responses}};
    for (auto ctx : {Context::predicted, Context::ground_truth}) {
        const auto& c = r.at(ctx);
        const auto& x = c.crosstab;
        out[to_string(ctx)] = {
            {"total", distribution_json(c.raw)},
            {"unique", distribution_json(c.unique)},
            {"discarded", c.discarded},
            {"incomplete", c.incomplete},
            {"crosstab",
             {{"n", x.total()},
              {"counts",
               {{"valid_correct", x.valid_correct},
                {"valid_wrong", x.valid_wrong},
                {"invalid_correct", x.invalid_correct},
                {"invalid_wrong", x.invalid_wrong}}},
              {"percent",
               {{"valid_correct", percent2(x.fraction(x.valid_correct))},
                {"valid_wrong", percent2(x.fraction(x.valid_wrong))},
                {"invalid_correct", percent2(x.fraction(x.invalid_correct))},
                {"invalid_wrong", percent2(x.fraction(x.invalid_wrong))}}}}}};
    }
    return out;
}

} // namespace xvqa::study
