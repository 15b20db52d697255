#pragma once

#include <map>
#include <vector>

#include "relflow/errors.hpp"
#include "relflow/graphdata.hpp"

namespace relflow {

/// Occurrence weights of triplet keys within one subgroup's pool.
struct CountTable {
    std::map<TripletKey, double> weight;
};

inline CountTable build_count_table(const std::vector<const Triplet*>& pool, bool soft) {
    CountTable table;
    for (const Triplet* t : pool) table.weight[key_of(*t)] += soft ? t->confidence : 1.0;
    return table;
}

/// Hard counting: score = 1 / (occurrences of the exact key in the pool).
/// Rarer keys score higher, matching the flow's higher-is-more-anomalous
/// convention.
inline std::vector<double> count_scores(const std::vector<const Triplet*>& pool) {
    if (pool.empty()) throw ValidationError("count_scores: empty pool");
    CountTable table = build_count_table(pool, false);
    std::vector<double> scores;
    scores.reserve(pool.size());
    for (const Triplet* t : pool) scores.push_back(1.0 / table.weight.at(key_of(*t)));
    return scores;
}

/// Soft counting: keys accumulate confidence mass instead of unit counts,
/// so several low-confidence candidate predicates for an object pair weigh
/// like one confident detection. A zero-confidence key scores +inf.
inline std::vector<double> soft_count_scores(const std::vector<const Triplet*>& pool) {
    if (pool.empty()) throw ValidationError("soft_count_scores: empty pool");
    for (const Triplet* t : pool)
        if (!(t->confidence >= 0.0 && t->confidence <= 1.0))
            throw ValidationError("soft_count_scores: confidence out of [0,1] for '" +
                                  t->instance_id + "'");
    CountTable table = build_count_table(pool, true);
    std::vector<double> scores;
    scores.reserve(pool.size());
    for (const Triplet* t : pool) scores.push_back(1.0 / table.weight.at(key_of(*t)));
    return scores;
}

} // namespace relflow
