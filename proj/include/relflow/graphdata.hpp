#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "relflow/errors.hpp"
#include "relflow/rng.hpp"

namespace relflow {

/// One directed subject-predicate-object edge of a scene graph; the unit
/// of anomaly detection.
struct Triplet {
    std::string subject;
    std::string predicate;
    std::string object;
    double confidence = 1.0;
    std::optional<bool> anomaly_label; // ground truth, attached during preprocessing
    bool injected = false;             // added by ground-truth correction, not the generator
    std::string instance_id;           // stable per-occurrence id, assigned at load

    std::tuple<const std::string&, const std::string&, const std::string&> key() const {
        return {subject, predicate, object};
    }
};

struct TripletKey {
    std::string subject, predicate, object;
    auto operator<=>(const TripletKey&) const = default;
};

inline TripletKey key_of(const Triplet& t) { return {t.subject, t.predicate, t.object}; }

struct GroundTruth {
    std::string subject, predicate, object;
    bool matches(const Triplet& t) const {
        return subject == t.subject && predicate == t.predicate && object == t.object;
    }
};

enum class ImageLabel { Normal, Anomalous };
enum class Split { None, Train, Test };

struct SceneGraph {
    std::string image_id;
    std::string scene_tag;
    ImageLabel label = ImageLabel::Normal;
    std::vector<Triplet> triplets;
    std::vector<GroundTruth> ground_truth; // several valid phrasings allowed
};

struct Dataset {
    std::string scene;
    std::vector<SceneGraph> graphs;
    std::vector<Split> split; // parallel to graphs; None until split_dataset

    std::size_t normal_count() const {
        std::size_t n = 0;
        for (const auto& g : graphs) n += g.label == ImageLabel::Normal ? 1 : 0;
        return n;
    }
};

/// One anomalous image paired with its normal companions for ranking.
struct Subgroup {
    std::string anomalous_image;
    std::vector<std::string> normal_images;
};

struct SynonymMap {
    std::map<std::string, std::string> replace;
};

// ---------------------------------------------------------------------------
// file formats

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("load_dataset: cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("load_dataset: " + path + ": " + e.what());
    }

    Dataset ds;
    if (!doc.contains("scene") || !doc["scene"].is_string())
        throw ValidationError("load_dataset: missing string field 'scene'");
    ds.scene = doc["scene"].get<std::string>();
    if (!doc.contains("images") || !doc["images"].is_array())
        throw ValidationError("load_dataset: missing array field 'images'");

    for (const auto& img : doc["images"]) {
        SceneGraph g;
        g.scene_tag = ds.scene;
        if (!img.contains("id") || !img["id"].is_string())
            throw ValidationError("load_dataset: image without string 'id'");
        g.image_id = img["id"].get<std::string>();
        const std::string where = "image '" + g.image_id + "'";
        if (!img.contains("label") || !img["label"].is_string())
            throw ValidationError("load_dataset: " + where + ": missing field 'label'");
        const std::string label = img["label"].get<std::string>();
        if (label == "normal") g.label = ImageLabel::Normal;
        else if (label == "anomalous") g.label = ImageLabel::Anomalous;
        else
            throw ValidationError("load_dataset: " + where + ": field 'label' must be 'normal' or 'anomalous', got '" + label + "'");

        if (!img.contains("triplets") || !img["triplets"].is_array())
            throw ValidationError("load_dataset: " + where + ": missing array field 'triplets'");
        std::size_t idx = 0;
        for (const auto& jt : img["triplets"]) {
            Triplet t;
            for (const char* field : {"subject", "predicate", "object"}) {
                if (!jt.contains(field) || !jt[field].is_string() || jt[field].get<std::string>().empty())
                    throw ValidationError("load_dataset: " + where + ": triplet " +
                                          std::to_string(idx) + ": field '" + field +
                                          "' must be a non-empty string");
            }
            t.subject = jt["subject"].get<std::string>();
            t.predicate = jt["predicate"].get<std::string>();
            t.object = jt["object"].get<std::string>();
            if (!jt.contains("confidence") || !jt["confidence"].is_number())
                throw ValidationError("load_dataset: " + where + ": triplet " +
                                      std::to_string(idx) + ": field 'confidence' missing");
            t.confidence = jt["confidence"].get<double>();
            if (!(t.confidence >= 0.0 && t.confidence <= 1.0))
                throw ValidationError("load_dataset: " + where + ": triplet " +
                                      std::to_string(idx) + " (" + t.subject + "-" + t.predicate +
                                      "-" + t.object + "): field 'confidence' out of [0,1]: " +
                                      std::to_string(t.confidence));
            t.instance_id = g.image_id + "#" + std::to_string(idx);
            g.triplets.push_back(std::move(t));
            ++idx;
        }

        if (img.contains("ground_truth")) {
            if (!img["ground_truth"].is_array())
                throw ValidationError("load_dataset: " + where + ": field 'ground_truth' must be an array");
            for (const auto& jgt : img["ground_truth"]) {
                GroundTruth gt;
                for (const char* field : {"subject", "predicate", "object"}) {
                    if (!jgt.contains(field) || !jgt[field].is_string())
                        throw ValidationError("load_dataset: " + where + ": ground_truth field '" +
                                              std::string(field) + "' must be a string");
                }
                gt.subject = jgt["subject"].get<std::string>();
                gt.predicate = jgt["predicate"].get<std::string>();
                gt.object = jgt["object"].get<std::string>();
                g.ground_truth.push_back(std::move(gt));
            }
        }
        if (g.label == ImageLabel::Anomalous && g.ground_truth.empty())
            throw ValidationError("load_dataset: " + where + ": anomalous image has no ground_truth");
        if (g.label == ImageLabel::Normal && !g.ground_truth.empty())
            throw ValidationError("load_dataset: " + where + ": normal image carries ground_truth");
        ds.graphs.push_back(std::move(g));
    }
    ds.split.assign(ds.graphs.size(), Split::None);
    return ds;
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
    nlohmann::ordered_json doc;
    doc["scene"] = ds.scene;
    doc["images"] = nlohmann::ordered_json::array();
    for (const auto& g : ds.graphs) {
        nlohmann::ordered_json img;
        img["id"] = g.image_id;
        img["label"] = g.label == ImageLabel::Normal ? "normal" : "anomalous";
        img["triplets"] = nlohmann::ordered_json::array();
        for (const auto& t : g.triplets) {
            img["triplets"].push_back({{"subject", t.subject},
                                       {"predicate", t.predicate},
                                       {"object", t.object},
                                       {"confidence", t.confidence}});
        }
        if (!g.ground_truth.empty()) {
            img["ground_truth"] = nlohmann::ordered_json::array();
            for (const auto& gt : g.ground_truth)
                img["ground_truth"].push_back(
                    {{"subject", gt.subject}, {"predicate", gt.predicate}, {"object", gt.object}});
        }
        doc["images"].push_back(std::move(img));
    }
    std::ofstream out(path);
    if (!out) throw ValidationError("write_dataset: cannot write " + path);
    out << doc.dump(2) << "\n";
}

/// Stoplist file: one token per line, '#' starts a comment.
inline std::set<std::string> load_stoplist(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("load_stoplist: cannot open " + path);
    std::set<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream iss(line);
        std::string tok;
        if (iss >> tok) tokens.insert(tok);
    }
    return tokens;
}

/// Synonym map file: original<TAB>replacement per line.
inline SynonymMap load_synonym_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("load_synonym_map: cannot open " + path);
    SynonymMap map;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ValidationError("load_synonym_map: line " + std::to_string(lineno) +
                                  ": expected original<TAB>replacement");
        std::string from = line.substr(0, tab);
        std::string to = line.substr(tab + 1);
        while (!to.empty() && (to.back() == '\r' || to.back() == ' ')) to.pop_back();
        if (from.empty() || to.empty())
            throw ValidationError("load_synonym_map: line " + std::to_string(lineno) + ": empty token");
        if (from == to)
            throw ValidationError("load_synonym_map: line " + std::to_string(lineno) +
                                  ": token '" + from + "' maps to itself");
        if (map.replace.count(from))
            throw ValidationError("load_synonym_map: duplicate key '" + from + "'");
        map.replace[from] = to;
    }
    return map;
}

// ---------------------------------------------------------------------------
// preprocessing

/// The k highest-confidence triplets, descending; ties keep file order.
inline std::vector<Triplet> select_top_k(const SceneGraph& graph, std::size_t k) {
    if (k < 1) throw ValidationError("select_top_k: k must be >= 1");
    std::vector<Triplet> out = graph.triplets;
    std::stable_sort(out.begin(), out.end(),
                     [](const Triplet& a, const Triplet& b) { return a.confidence > b.confidence; });
    if (out.size() > k) out.resize(k);
    return out;
}

inline std::vector<Triplet> filter_minor_objects(const std::vector<Triplet>& triplets,
                                                 const std::set<std::string>& stoplist) {
    std::vector<Triplet> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets)
        if (!stoplist.count(t.subject) && !stoplist.count(t.object)) out.push_back(t);
    return out;
}

/// Ground-truth correction for anomalous graphs: label every retained
/// triplet that matches a descriptor; if none matches, append the first
/// descriptor as a triplet with confidence 0 and the injected flag set.
inline SceneGraph inject_ground_truth(const SceneGraph& graph) {
    if (graph.label != ImageLabel::Anomalous)
        throw ValidationError("inject_ground_truth: image '" + graph.image_id + "' is not anomalous");
    if (graph.ground_truth.empty())
        throw ValidationError("inject_ground_truth: anomalous image '" + graph.image_id +
                              "' has empty ground truth");
    SceneGraph out = graph;
    bool matched = false;
    for (auto& t : out.triplets) {
        for (const auto& gt : out.ground_truth) {
            if (gt.matches(t)) {
                t.anomaly_label = true;
                matched = true;
            }
        }
    }
    if (!matched) {
        const GroundTruth& gt = out.ground_truth.front();
        Triplet t;
        t.subject = gt.subject;
        t.predicate = gt.predicate;
        t.object = gt.object;
        t.confidence = 0.0; // the generator never ranked it
        t.injected = true;
        t.anomaly_label = true;
        t.instance_id = out.image_id + "#gt";
        out.triplets.push_back(std::move(t));
    }
    return out;
}

/// Assigns normal images to train/test; anomalous images always test.
/// Train side takes floor(fraction * normals) with at least one test image.
inline Dataset split_dataset(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("split_dataset: train_fraction must be in (0,1)");
    std::vector<std::size_t> normal_idx;
    for (std::size_t i = 0; i < dataset.graphs.size(); ++i)
        if (dataset.graphs[i].label == ImageLabel::Normal) normal_idx.push_back(i);
    if (normal_idx.empty()) throw ValidationError("split_dataset: dataset has no normal images");

    std::size_t n_train = static_cast<std::size_t>(double(normal_idx.size()) * train_fraction);
    if (n_train >= normal_idx.size()) n_train = normal_idx.size() - 1;

    Rng rng(seed);
    rng.shuffle(normal_idx);
    Dataset out = dataset;
    out.split.assign(out.graphs.size(), Split::Test);
    for (std::size_t i = 0; i < n_train; ++i) out.split[normal_idx[i]] = Split::Train;
    return out;
}

/// One subgroup per anomalous image; companions are drawn uniformly
/// without replacement from the test-split normal images. Normal images
/// may recur across subgroups.
inline std::vector<Subgroup> build_subgroups(const Dataset& dataset, std::size_t size,
                                             std::uint64_t seed) {
    if (size < 2) throw ValidationError("build_subgroups: size must be >= 2");
    std::vector<std::string> test_normals;
    std::vector<std::string> anomalous;
    for (std::size_t i = 0; i < dataset.graphs.size(); ++i) {
        const auto& g = dataset.graphs[i];
        if (g.label == ImageLabel::Normal && dataset.split[i] == Split::Test)
            test_normals.push_back(g.image_id);
        if (g.label == ImageLabel::Anomalous) anomalous.push_back(g.image_id);
    }
    if (size - 1 > test_normals.size())
        throw ValidationError("build_subgroups: need " + std::to_string(size - 1) +
                              " test-split normal images, have " +
                              std::to_string(test_normals.size()));
    Rng rng(seed);
    std::vector<Subgroup> out;
    for (const auto& a : anomalous) {
        // partial Fisher-Yates over a fresh index list
        std::vector<std::size_t> idx(test_normals.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Subgroup sg;
        sg.anomalous_image = a;
        for (std::size_t i = 0; i + 1 < size; ++i) {
            std::size_t j = i + rng.index(idx.size() - i);
            std::swap(idx[i], idx[j]);
            sg.normal_images.push_back(test_normals[idx[i]]);
        }
        out.push_back(std::move(sg));
    }
    return out;
}

namespace detail {
/// All substitution variants of a descriptor under the map (excluding the
/// untouched original), covering every subset of replaceable slots so that
/// partially substituted data triplets still match.
inline std::vector<GroundTruth> synonym_variants(const GroundTruth& gt, const SynonymMap& map) {
    std::vector<GroundTruth> out;
    const std::string* slots[3] = {&gt.subject, &gt.predicate, &gt.object};
    bool mapped[3];
    std::string repl[3];
    for (int i = 0; i < 3; ++i) {
        auto it = map.replace.find(*slots[i]);
        mapped[i] = it != map.replace.end();
        if (mapped[i]) repl[i] = it->second;
    }
    for (int bits = 1; bits < 8; ++bits) {
        bool usable = true;
        for (int i = 0; i < 3; ++i)
            if ((bits >> i & 1) && !mapped[i]) usable = false;
        if (!usable) continue;
        GroundTruth v = gt;
        if (bits & 1) v.subject = repl[0];
        if (bits & 2) v.predicate = repl[1];
        if (bits & 4) v.object = repl[2];
        out.push_back(std::move(v));
    }
    return out;
}
} // namespace detail

/// Replaces each mapped token occurrence independently with probability
/// `rate` and extends ground-truth descriptor lists with the substituted
/// variants so labels survive the perturbation.
inline Dataset apply_synonyms(const Dataset& dataset, const SynonymMap& map, double rate,
                              std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0))
        throw ValidationError("apply_synonyms: rate must be in [0,1]");
    Dataset out = dataset;
    Rng rng(seed);
    auto maybe_replace = [&](std::string& token) {
        auto it = map.replace.find(token);
        if (it == map.replace.end()) return;
        if (rng.uniform() < rate) token = it->second;
    };
    for (auto& g : out.graphs) {
        for (auto& t : g.triplets) {
            maybe_replace(t.subject);
            maybe_replace(t.predicate);
            maybe_replace(t.object);
        }
        if (!g.ground_truth.empty()) {
            std::vector<GroundTruth> extended = g.ground_truth;
            std::set<std::tuple<std::string, std::string, std::string>> seen;
            for (const auto& gt : g.ground_truth)
                seen.insert({gt.subject, gt.predicate, gt.object});
            for (const auto& gt : g.ground_truth) {
                for (auto& v : detail::synonym_variants(gt, map)) {
                    auto key = std::make_tuple(v.subject, v.predicate, v.object);
                    if (seen.insert(key).second) extended.push_back(std::move(v));
                }
            }
            g.ground_truth = std::move(extended);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// synthetic generator

/// Desk-scale stand-in for the upstream scene-graph generator: a long-tail
/// vocabulary of normal triplet patterns plus anomalous pairings that never
/// occur in normal images.
struct SynthConfig {
    std::string scene = "synthetic";
    std::size_t normal_images = 60;
    std::size_t anomalous_images = 30;
    std::size_t triplets_per_image = 30;
    double zipf_exponent = 1.0;
    double confidence_min = 0.3;
    double confidence_max = 1.0;
    std::vector<TripletKey> normal_vocab;
    std::vector<TripletKey> anomalous_vocab;
};

inline Dataset gen_synthetic(const SynthConfig& config, std::uint64_t seed) {
    if (config.normal_vocab.empty()) throw ValidationError("gen_synthetic: empty normal vocabulary");
    if (config.anomalous_images > 0 && config.anomalous_vocab.empty())
        throw ValidationError("gen_synthetic: anomalous images requested with empty anomalous vocabulary");
    if (config.triplets_per_image < 1)
        throw ValidationError("gen_synthetic: triplets_per_image must be >= 1");
    {
        std::set<TripletKey> normal_keys(config.normal_vocab.begin(), config.normal_vocab.end());
        for (const auto& a : config.anomalous_vocab)
            if (normal_keys.count(a))
                throw ValidationError("gen_synthetic: anomalous pairing '" + a.subject + "-" +
                                      a.predicate + "-" + a.object +
                                      "' overlaps the normal vocabulary");
    }

    // Zipf-like weights over the vocabulary in listed order.
    std::vector<double> cum(config.normal_vocab.size());
    double total = 0.0;
    for (std::size_t i = 0; i < cum.size(); ++i) {
        total += std::pow(double(i + 1), -config.zipf_exponent);
        cum[i] = total;
    }

    Rng rng(seed);
    auto draw_pattern = [&]() -> const TripletKey& {
        const double u = rng.uniform() * total;
        auto it = std::lower_bound(cum.begin(), cum.end(), u);
        std::size_t i = std::min<std::size_t>(it - cum.begin(), cum.size() - 1);
        return config.normal_vocab[i];
    };
    auto draw_conf = [&]() { return rng.uniform(config.confidence_min, config.confidence_max); };

    Dataset ds;
    ds.scene = config.scene;
    auto add_triplet = [&](SceneGraph& g, const TripletKey& k) {
        Triplet t;
        t.subject = k.subject;
        t.predicate = k.predicate;
        t.object = k.object;
        t.confidence = draw_conf();
        t.instance_id = g.image_id + "#" + std::to_string(g.triplets.size());
        g.triplets.push_back(std::move(t));
    };

    for (std::size_t i = 0; i < config.normal_images; ++i) {
        SceneGraph g;
        g.scene_tag = ds.scene;
        g.label = ImageLabel::Normal;
        char buf[16];
        std::snprintf(buf, sizeof buf, "n%03zu", i);
        g.image_id = buf;
        for (std::size_t j = 0; j < config.triplets_per_image; ++j) add_triplet(g, draw_pattern());
        ds.graphs.push_back(std::move(g));
    }
    for (std::size_t i = 0; i < config.anomalous_images; ++i) {
        SceneGraph g;
        g.scene_tag = ds.scene;
        g.label = ImageLabel::Anomalous;
        char buf[16];
        std::snprintf(buf, sizeof buf, "a%03zu", i);
        g.image_id = buf;
        const TripletKey& anom = config.anomalous_vocab[i % config.anomalous_vocab.size()];
        const std::size_t anom_pos = rng.index(config.triplets_per_image);
        for (std::size_t j = 0; j < config.triplets_per_image; ++j)
            add_triplet(g, j == anom_pos ? anom : draw_pattern());
        g.ground_truth.push_back({anom.subject, anom.predicate, anom.object});
        ds.graphs.push_back(std::move(g));
    }
    ds.split.assign(ds.graphs.size(), Split::None);
    return ds;
}

} // namespace relflow
