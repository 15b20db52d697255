#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "relflow/errors.hpp"
#include "relflow/rng.hpp"

namespace relflow {

enum class AggregationMode { Concat, Sum, Mult, NodeOnly };

inline std::string aggregation_name(AggregationMode m) {
    switch (m) {
        case AggregationMode::Concat: return "concat";
        case AggregationMode::Sum: return "sum";
        case AggregationMode::Mult: return "mult";
        case AggregationMode::NodeOnly: return "node_only";
    }
    return "?";
}

inline AggregationMode aggregation_from_name(const std::string& s) {
    if (s == "concat") return AggregationMode::Concat;
    if (s == "sum") return AggregationMode::Sum;
    if (s == "mult") return AggregationMode::Mult;
    if (s == "node_only") return AggregationMode::NodeOnly;
    throw ValidationError("unknown aggregation mode '" + s + "'");
}

/// Frozen token -> vector map, loaded from the standard pretrained-vector
/// text layout: one token per line followed by its components.
struct EmbeddingTable {
    std::size_t dim = 0;
    std::map<std::string, std::vector<double>> vectors;
    std::size_t duplicate_tokens = 0; // last occurrence won for these

    bool contains(const std::string& token) const { return vectors.count(token) > 0; }
};

inline EmbeddingTable load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("load_embeddings: cannot open " + path);
    EmbeddingTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream iss(line);
        std::string token;
        iss >> token;
        std::vector<double> vec;
        double x;
        while (iss >> x) vec.push_back(x);
        if (vec.empty())
            throw ValidationError("load_embeddings: line " + std::to_string(lineno) +
                                  " has no vector components");
        if (table.dim == 0) {
            table.dim = vec.size();
        } else if (vec.size() != table.dim) {
            throw ValidationError("load_embeddings: line " + std::to_string(lineno) + " has " +
                                  std::to_string(vec.size()) + " components, expected " +
                                  std::to_string(table.dim));
        }
        if (table.vectors.count(token)) ++table.duplicate_tokens;
        table.vectors[token] = std::move(vec);
    }
    if (table.dim == 0) throw ValidationError("load_embeddings: " + path + " is empty");
    return table;
}

struct PhraseVector {
    std::vector<double> values;
    std::size_t oov_words = 0;
    bool all_oov = false;
};

/// Mean of the per-word vectors of a whitespace/underscore separated
/// phrase. Out-of-vocabulary words contribute the zero vector and are
/// counted; an all-OOV phrase yields the zero vector with the flag set.
inline PhraseVector embed_phrase(const EmbeddingTable& table, const std::string& phrase) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : phrase) {
        if (c == ' ' || c == '\t' || c == '_') {
            if (!cur.empty()) words.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    if (words.empty()) throw ValidationError("embed_phrase: empty phrase");

    PhraseVector out;
    out.values.assign(table.dim, 0.0);
    std::size_t hits = 0;
    for (const auto& w : words) {
        auto it = table.vectors.find(w);
        if (it == table.vectors.end()) {
            ++out.oov_words;
            continue;
        }
        ++hits;
        for (std::size_t i = 0; i < table.dim; ++i) out.values[i] += it->second[i];
    }
    const double inv = 1.0 / double(words.size());
    for (double& x : out.values) x *= inv;
    out.all_oov = hits == 0;
    return out;
}

/// Fixed-size embedding of one triplet with its aggregation mode attached.
struct TripletVector {
    std::vector<double> values;
    AggregationMode mode = AggregationMode::Concat;
    std::string source_id;
};

struct EmbedStats {
    std::size_t oov_words = 0;
    std::size_t all_oov_phrases = 0;

    void absorb(const PhraseVector& p) {
        oov_words += p.oov_words;
        all_oov_phrases += p.all_oov ? 1 : 0;
    }
};

template <typename TripletLike>
TripletVector embed_triplet(const EmbeddingTable& table, const TripletLike& t,
                            AggregationMode mode, EmbedStats* stats = nullptr) {
    PhraseVector vp = embed_phrase(table, t.predicate);
    PhraseVector vs = embed_phrase(table, t.subject);
    PhraseVector vo = embed_phrase(table, t.object);
    if (stats) {
        stats->absorb(vp);
        stats->absorb(vs);
        stats->absorb(vo);
    }
    TripletVector out;
    out.mode = mode;
    out.source_id = t.instance_id;
    const std::size_t d = table.dim;
    switch (mode) {
        case AggregationMode::Concat:
            // predicate first, then subject, then object; the order is
            // frozen for checkpoint compatibility.
            out.values.reserve(3 * d);
            out.values.insert(out.values.end(), vp.values.begin(), vp.values.end());
            out.values.insert(out.values.end(), vs.values.begin(), vs.values.end());
            out.values.insert(out.values.end(), vo.values.begin(), vo.values.end());
            break;
        case AggregationMode::Sum:
            out.values.assign(d, 0.0);
            for (std::size_t i = 0; i < d; ++i)
                out.values[i] = vp.values[i] + vs.values[i] + vo.values[i];
            break;
        case AggregationMode::Mult:
            out.values.assign(d, 0.0);
            for (std::size_t i = 0; i < d; ++i)
                out.values[i] = vp.values[i] * vs.values[i] * vo.values[i];
            break;
        case AggregationMode::NodeOnly:
            out.values.reserve(2 * d);
            out.values.insert(out.values.end(), vs.values.begin(), vs.values.end());
            out.values.insert(out.values.end(), vo.values.begin(), vo.values.end());
            break;
    }
    return out;
}

/// Vector length produced by a mode for a table of dimension d.
inline std::size_t aggregated_dim(AggregationMode mode, std::size_t d) {
    switch (mode) {
        case AggregationMode::Concat: return 3 * d;
        case AggregationMode::Sum: return d;
        case AggregationMode::Mult: return d;
        case AggregationMode::NodeOnly: return 2 * d;
    }
    return 0;
}

/// Independent Gaussian noise on every component, N(0, sigma^2).
inline TripletVector add_noise(const TripletVector& vec, double sigma, Rng& rng) {
    if (sigma < 0.0) throw ValidationError("add_noise: negative sigma");
    if (sigma == 0.0) return vec;
    TripletVector out = vec;
    for (double& x : out.values) x += sigma * rng.normal();
    return out;
}

inline TripletVector add_noise(const TripletVector& vec, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    return add_noise(vec, sigma, rng);
}

} // namespace relflow
