#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "relflow/errors.hpp"
#include "relflow/graphdata.hpp"

namespace relflow {

struct ScoredItem {
    std::string id;
    double score = 0.0;
    int label = 0; // 1 = anomalous
};

using ScoredSet = std::vector<ScoredItem>;

/// Rank-based (Mann-Whitney) AUROC with half credit for ties.
inline double auroc(const ScoredSet& set) {
    std::size_t n_pos = 0;
    for (const auto& s : set) n_pos += s.label ? 1 : 0;
    const std::size_t n_neg = set.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw ValidationError("auroc: need both classes, got " + std::to_string(n_pos) +
                              " positive / " + std::to_string(n_neg) + " negative");

    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return set[a].score < set[b].score; });

    // average ranks over tie groups, 1-based
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && set[order[j]].score == set[order[i]].score) ++j;
        const double avg_rank = 0.5 * double(i + 1 + j); // mean of ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k)
            if (set[order[k]].label) pos_rank_sum += avg_rank;
        i = j;
    }
    const double u = pos_rank_sum - 0.5 * double(n_pos) * double(n_pos + 1);
    return u / (double(n_pos) * double(n_neg));
}

namespace detail {
/// 1-based ranks under descending score, ties broken by input order.
inline std::vector<std::size_t> descending_ranks(const ScoredSet& set) {
    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return set[a].score > set[b].score; });
    std::vector<std::size_t> rank(set.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
    return rank;
}
} // namespace detail

/// Fraction of anomalies ranked within the top k.
inline double recall_at_k(const ScoredSet& set, std::size_t k) {
    if (k < 1) throw ValidationError("recall_at_k: k must be >= 1");
    std::size_t n_pos = 0, hit = 0;
    const auto rank = detail::descending_ranks(set);
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (!set[i].label) continue;
        ++n_pos;
        if (rank[i] <= k) ++hit;
    }
    if (n_pos == 0) throw ValidationError("recall_at_k: no anomalous items");
    return double(hit) / double(n_pos);
}

/// Mean of Recall@k over integer k in [k_min, k_max]. Recall saturates at
/// 1 once k reaches the set size.
inline double auc_recall_k(const ScoredSet& set, std::size_t k_min, std::size_t k_max) {
    if (k_min < 1 || k_min > k_max) throw ValidationError("auc_recall_k: invalid k range");
    std::size_t n_pos = 0;
    for (const auto& s : set) n_pos += s.label ? 1 : 0;
    if (n_pos == 0) throw ValidationError("auc_recall_k: no anomalous items");

    const auto rank = detail::descending_ranks(set);
    // hits_at[k] = number of anomalies with rank <= k
    std::vector<std::size_t> hits_at(set.size() + 1, 0);
    for (std::size_t i = 0; i < set.size(); ++i)
        if (set[i].label) ++hits_at[rank[i]];
    for (std::size_t k = 1; k <= set.size(); ++k) hits_at[k] += hits_at[k - 1];

    double total = 0.0;
    for (std::size_t k = k_min; k <= k_max; ++k) {
        const std::size_t kk = std::min(k, set.size());
        total += double(hits_at[kk]) / double(n_pos);
    }
    return total / double(k_max - k_min + 1);
}

// ---------------------------------------------------------------------------
// dataset-level evaluation

struct SubgroupEval {
    std::string anomalous_image;
    double auc_recall = 0.0;
    std::size_t pool_size = 0;
};

/// One seed's evaluation: AUROC pooled over the test set, AUC-Recall@k
/// averaged over subgroups.
struct SeedEval {
    std::uint64_t seed = 0;
    double auroc = 0.0;
    double auc_recall_k = 0.0;
    std::vector<SubgroupEval> per_subgroup;
};

inline int triplet_label(const Triplet& t) {
    return t.anomaly_label.has_value() && *t.anomaly_label ? 1 : 0;
}

/// Scores per triplet instance id -> metrics. `test_graphs` are the
/// processed test-split graphs (normals and anomalous); every triplet must
/// be scored. AUROC pools each instance once; AUC-Recall@k is computed
/// within each subgroup's triplet pool and averaged.
inline SeedEval evaluate(const std::map<std::string, double>& scores,
                         const std::vector<SceneGraph>& test_graphs,
                         const std::vector<Subgroup>& subgroups, std::size_t k_min,
                         std::size_t k_max) {
    std::map<std::string, const SceneGraph*> by_id;
    for (const auto& g : test_graphs) by_id[g.image_id] = &g;

    auto scored_item = [&](const Triplet& t) {
        auto it = scores.find(t.instance_id);
        if (it == scores.end())
            throw ValidationError("evaluate: unscored triplet '" + t.instance_id + "'");
        return ScoredItem{t.instance_id, it->second, triplet_label(t)};
    };

    SeedEval eval;
    ScoredSet pooled;
    for (const auto& g : test_graphs)
        for (const auto& t : g.triplets) pooled.push_back(scored_item(t));
    eval.auroc = auroc(pooled);

    double total = 0.0;
    for (const auto& sg : subgroups) {
        ScoredSet pool;
        auto add_image = [&](const std::string& id) {
            auto it = by_id.find(id);
            if (it == by_id.end())
                throw ValidationError("evaluate: subgroup references unknown image '" + id + "'");
            for (const auto& t : it->second->triplets) pool.push_back(scored_item(t));
        };
        add_image(sg.anomalous_image);
        for (const auto& id : sg.normal_images) add_image(id);
        SubgroupEval se;
        se.anomalous_image = sg.anomalous_image;
        se.pool_size = pool.size();
        se.auc_recall = auc_recall_k(pool, k_min, k_max);
        total += se.auc_recall;
        eval.per_subgroup.push_back(std::move(se));
    }
    eval.auc_recall_k = subgroups.empty() ? 0.0 : total / double(subgroups.size());
    return eval;
}

/// Mean and sample standard deviation (0 for a single value).
inline std::pair<double, double> mean_std(const std::vector<double>& values) {
    if (values.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= double(values.size());
    if (values.size() == 1) return {mean, 0.0};
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= double(values.size() - 1);
    return {mean, std::sqrt(var)};
}

} // namespace relflow
