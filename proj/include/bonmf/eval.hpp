#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bonmf/baselines.hpp"
#include "bonmf/data.hpp"
#include "bonmf/error.hpp"
#include "bonmf/model.hpp"

namespace bonmf {

/// Mean squared error over paired predictions and targets.
inline double mse(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size()) throw DimensionError("mse", predictions.size(), targets.size());
    if (predictions.empty()) throw UsageError("mse: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - targets[i];
        sum += d * d;
    }
    return sum / static_cast<double>(predictions.size());
}

struct ScoredItem {
    std::size_t item = 0;
    double score = 0.0;

    bool operator==(const ScoredItem&) const = default;
};

/// Items in (score desc, item asc) order.
struct RankedList {
    std::size_t user = 0;
    std::vector<ScoredItem> items;
};

/// Sorts by descending score, ties broken by ascending item index, then
/// truncates to k.
inline RankedList rank_items(std::size_t user, std::vector<ScoredItem> scored, std::size_t k) {
    if (k == 0) throw UsageError("rank_items: K must be >= 1");
    std::sort(scored.begin(), scored.end(), [](const ScoredItem& a, const ScoredItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.item < b.item;
    });
    if (scored.size() > k) scored.resize(k);
    return {user, std::move(scored)};
}

using ScoreFunction = std::function<double(std::size_t user, std::size_t item)>;

inline RankedList rank_items(std::size_t user, std::span<const std::size_t> candidates, const ScoreFunction& score,
                             std::size_t k) {
    std::vector<ScoredItem> scored;
    scored.reserve(candidates.size());
    for (auto item : candidates) scored.push_back({item, score(user, item)});
    return rank_items(user, std::move(scored), k);
}

struct RelevanceJudgments {
    double threshold = 4.0;
    std::map<std::size_t, std::set<std::size_t>> relevant;  // user -> relevant items

    const std::set<std::size_t>& of(std::size_t user) const {
        static const std::set<std::size_t> none;
        const auto it = relevant.find(user);
        return it == relevant.end() ? none : it->second;
    }
};

/// Relevant = test records with rating >= threshold.
inline RelevanceJudgments judge(const InteractionSet& data, std::span<const std::size_t> test, double threshold) {
    RelevanceJudgments judged;
    judged.threshold = threshold;
    for (auto r : test)
        if (data.rating(r) >= threshold) judged.relevant[data.user_of(r)].insert(data.item_of(r));
    return judged;
}

struct RankingScore {
    double value = 0.0;
    std::size_t n_scored = 0;
    std::size_t n_skipped = 0;
};

/// Mean over users with at least one relevant item of |top-K ∩ relevant| / K.
inline RankingScore precision_at_k(std::span<const RankedList> ranked, const RelevanceJudgments& judged, std::size_t k) {
    if (k == 0) throw UsageError("precision_at_k: K must be >= 1");
    RankingScore out;
    double sum = 0.0;
    for (const auto& list : ranked) {
        const auto& rel = judged.of(list.user);
        if (rel.empty()) {
            ++out.n_skipped;
            continue;
        }
        std::size_t hits = 0;
        for (std::size_t p = 0; p < std::min(k, list.items.size()); ++p) hits += rel.count(list.items[p].item);
        sum += static_cast<double>(hits) / static_cast<double>(k);
        ++out.n_scored;
    }
    if (out.n_scored == 0) throw DataError("precision_at_k: no user has a relevant test item");
    out.value = sum / static_cast<double>(out.n_scored);
    return out;
}

/// Binary-gain NDCG with 1/log2(p+1) discount; users with IDCG = 0 skipped.
inline RankingScore ndcg_at_k(std::span<const RankedList> ranked, const RelevanceJudgments& judged, std::size_t k) {
    if (k == 0) throw UsageError("ndcg_at_k: K must be >= 1");
    RankingScore out;
    double sum = 0.0;
    for (const auto& list : ranked) {
        const auto& rel = judged.of(list.user);
        if (rel.empty()) {
            ++out.n_skipped;
            continue;
        }
        double dcg = 0.0;
        for (std::size_t p = 0; p < std::min(k, list.items.size()); ++p)
            if (rel.count(list.items[p].item)) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
        double idcg = 0.0;
        for (std::size_t p = 0; p < std::min(k, rel.size()); ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
        sum += dcg / idcg;
        ++out.n_scored;
    }
    if (out.n_scored == 0) throw DataError("ndcg_at_k: no user has a relevant test item");
    out.value = sum / static_cast<double>(out.n_scored);
    return out;
}

struct EvalOptions {
    std::size_t k = 5;
    double relevance_threshold = 4.0;
    bool full_catalog = false;  // rank all items the user has no training record for

    void validate() const {
        if (k == 0) throw UsageError("K must be >= 1");
        if (!(relevance_threshold >= kRatingMin && relevance_threshold <= kRatingMax))
            throw UsageError("relevance threshold must lie within the rating range");
    }
};

struct EvalReport {
    double mse = 0.0;
    double precision_at_k = 0.0;
    double ndcg_at_k = 0.0;
    std::size_t k = 0;
    std::size_t n_test_records = 0;
    std::size_t n_users_scored = 0;
    std::size_t n_users_skipped = 0;
    std::map<std::string, std::string> config;

    bool operator==(const EvalReport&) const = default;
};

/// MSE over the test records plus ranking metrics over each test user's
/// candidate set. `score` must return the clipped prediction.
inline EvalReport evaluate(const InteractionSet& data, std::span<const std::size_t> train, std::span<const std::size_t> test,
                           const ScoreFunction& score, const EvalOptions& options) {
    options.validate();
    if (test.empty()) throw DataError("evaluate: empty test set");

    EvalReport report;
    report.k = options.k;
    report.n_test_records = test.size();

    std::vector<double> predictions;
    std::vector<double> targets;
    predictions.reserve(test.size());
    targets.reserve(test.size());
    std::map<std::size_t, std::vector<ScoredItem>> per_user;
    for (auto r : test) {
        const std::size_t u = data.user_of(r);
        const std::size_t i = data.item_of(r);
        const double s = score(u, i);
        predictions.push_back(s);
        targets.push_back(data.rating(r));
        per_user[u].push_back({i, s});
    }
    report.mse = mse(predictions, targets);

    if (options.full_catalog) {
        std::map<std::size_t, std::set<std::size_t>> trained;
        for (auto r : train) trained[data.user_of(r)].insert(data.item_of(r));
        for (auto& [u, scored] : per_user) {
            scored.clear();
            const auto& exclude = trained[u];
            for (std::size_t i = 0; i < data.n_items(); ++i)
                if (!exclude.count(i)) scored.push_back({i, score(u, i)});
        }
    }

    std::vector<RankedList> ranked;
    ranked.reserve(per_user.size());
    for (auto& [u, scored] : per_user) ranked.push_back(rank_items(u, std::move(scored), options.k));

    const auto judged = judge(data, test, options.relevance_threshold);
    const auto precision = precision_at_k(ranked, judged, options.k);
    const auto ndcg = ndcg_at_k(ranked, judged, options.k);
    report.precision_at_k = precision.value;
    report.ndcg_at_k = ndcg.value;
    report.n_users_scored = precision.n_scored;
    report.n_users_skipped = precision.n_skipped;
    report.config["k"] = std::to_string(options.k);
    report.config["relevance_threshold"] = detail::format_double(options.relevance_threshold);
    report.config["candidates"] = options.full_catalog ? "full_catalog" : "test_items";
    return report;
}

inline EvalReport evaluate(const BonmfModel& model, const InteractionSet& data, const FeatureIndex& features,
                           std::span<const std::size_t> train, std::span<const std::size_t> test,
                           const EvalOptions& options) {
    return evaluate(
        data, train, test,
        [&](std::size_t u, std::size_t i) { return model.predict_clipped(u, i, features.inputs(u, i)); }, options);
}

inline EvalReport evaluate(const SvdModel& model, const InteractionSet& data, std::span<const std::size_t> train,
                           std::span<const std::size_t> test, const EvalOptions& options) {
    return evaluate(
        data, train, test, [&](std::size_t u, std::size_t i) { return svd_predict_clipped(model, u, i); }, options);
}

}  // namespace bonmf
