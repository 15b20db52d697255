#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "relflow/errors.hpp"
#include "relflow/mlp.hpp"
#include "relflow/optim.hpp"
#include "relflow/rng.hpp"

namespace relflow {

enum class MaskPattern { Alternating, AlternatingShifted, Half };

inline std::string mask_pattern_name(MaskPattern p) {
    switch (p) {
        case MaskPattern::Alternating: return "alternating";
        case MaskPattern::AlternatingShifted: return "alternating_shifted";
        case MaskPattern::Half: return "half";
    }
    return "?";
}

inline MaskPattern mask_pattern_from_name(const std::string& s) {
    if (s == "alternating") return MaskPattern::Alternating;
    if (s == "alternating_shifted") return MaskPattern::AlternatingShifted;
    if (s == "half") return MaskPattern::Half;
    throw ValidationError("unknown mask pattern '" + s + "'");
}

/// 1 marks a pass-through coordinate, 0 a transformed one.
inline std::vector<std::uint8_t> make_mask(std::size_t d_z, MaskPattern pattern) {
    if (d_z < 2) throw ValidationError("make_mask: d_z must be >= 2");
    std::vector<std::uint8_t> mask(d_z, 0);
    switch (pattern) {
        case MaskPattern::Alternating:
            for (std::size_t i = 0; i < d_z; i += 2) mask[i] = 1;
            break;
        case MaskPattern::AlternatingShifted:
            for (std::size_t i = 1; i < d_z; i += 2) mask[i] = 1;
            break;
        case MaskPattern::Half:
            for (std::size_t i = 0; i < (d_z + 1) / 2; ++i) mask[i] = 1;
            break;
    }
    return mask;
}

/// Affine coupling layer: pass-through coordinates are copied, the rest get
/// z2 * exp(s(z1)) + t(z1). The scale net output is clamped through a
/// scaled tanh before exponentiation.
struct CouplingLayer {
    std::vector<std::uint8_t> mask;
    MaskPattern pattern = MaskPattern::Alternating;
    MlpParams s_net; // pass-through count -> transformed count
    MlpParams t_net;

    std::vector<std::size_t> pass_indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) idx.push_back(i);
        return idx;
    }
    std::vector<std::size_t> trans_indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (!mask[i]) idx.push_back(i);
        return idx;
    }
};

struct FlowModel {
    std::vector<CouplingLayer> layers;
    std::size_t d_z = 0;
    double clamp_bound = 4.0;
    bool frozen = false;
};

struct CouplingCache {
    Matrix z1, z2;
    Matrix s_raw, s_clamped, exp_s;
    ForwardCache s_cache, t_cache;
};

namespace detail {

inline Matrix take_columns(const Matrix& m, const std::vector<std::size_t>& idx) {
    Matrix out(m.rows, idx.size());
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* src = m.row(i);
        double* dst = out.row(i);
        for (std::size_t j = 0; j < idx.size(); ++j) dst[j] = src[idx[j]];
    }
    return out;
}

inline void put_columns(Matrix& m, const std::vector<std::size_t>& idx, const Matrix& cols) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* dst = m.row(i);
        const double* src = cols.row(i);
        for (std::size_t j = 0; j < idx.size(); ++j) dst[idx[j]] = src[j];
    }
}

inline double clamp_scale(double x, double bound) { return bound * std::tanh(x / bound); }

} // namespace detail

/// Forward map of one coupling layer over a batch. Appends each row's
/// log|det J| (the sum of clamped scales) to logdet.
inline Matrix coupling_forward(const CouplingLayer& layer, const Matrix& z, double clamp_bound,
                               std::vector<double>& logdet, CouplingCache* cache = nullptr,
                               std::size_t layer_index = 0) {
    const auto pass = layer.pass_indices();
    const auto trans = layer.trans_indices();
    if (pass.empty() || trans.empty())
        throw ValidationError("coupling layer " + std::to_string(layer_index) +
                              ": mask must have both pass-through and transformed coordinates");
    if (z.cols != layer.mask.size())
        throw ValidationError("coupling layer " + std::to_string(layer_index) + ": input width " +
                              std::to_string(z.cols) + " does not match mask size " +
                              std::to_string(layer.mask.size()));

    Matrix z1 = detail::take_columns(z, pass);
    Matrix z2 = detail::take_columns(z, trans);
    CouplingCache local;
    CouplingCache& c = cache ? *cache : local;
    Matrix s_raw = mlp_forward(layer.s_net, z1, cache ? &c.s_cache : nullptr);
    Matrix t_out = mlp_forward(layer.t_net, z1, cache ? &c.t_cache : nullptr);

    Matrix s_clamped(s_raw.rows, s_raw.cols);
    Matrix exp_s(s_raw.rows, s_raw.cols);
    Matrix y2(z2.rows, z2.cols);
    if (logdet.size() != z.rows) logdet.assign(z.rows, 0.0);
    for (std::size_t i = 0; i < z.rows; ++i) {
        double ld = 0.0;
        for (std::size_t j = 0; j < trans.size(); ++j) {
            const double sc = detail::clamp_scale(s_raw.at(i, j), clamp_bound);
            const double es = std::exp(sc);
            s_clamped.at(i, j) = sc;
            exp_s.at(i, j) = es;
            y2.at(i, j) = z2.at(i, j) * es + t_out.at(i, j);
            ld += sc;
        }
        logdet[i] += ld;
    }
    if (!y2.all_finite())
        throw ComputeError("coupling layer " + std::to_string(layer_index) +
                           ": non-finite output");

    Matrix out = z;
    detail::put_columns(out, trans, y2);
    if (cache) {
        c.z1 = std::move(z1);
        c.z2 = std::move(z2);
        c.s_raw = std::move(s_raw);
        c.s_clamped = std::move(s_clamped);
        c.exp_s = std::move(exp_s);
    }
    return out;
}

/// Exact algebraic inverse: z2 = (y2 - t(z1)) * exp(-s(z1)).
inline Matrix coupling_inverse(const CouplingLayer& layer, const Matrix& y, double clamp_bound,
                               std::size_t layer_index = 0) {
    const auto pass = layer.pass_indices();
    const auto trans = layer.trans_indices();
    Matrix z1 = detail::take_columns(y, pass);
    Matrix y2 = detail::take_columns(y, trans);
    Matrix s_raw = mlp_forward(layer.s_net, z1);
    Matrix t_out = mlp_forward(layer.t_net, z1);
    Matrix z2(y2.rows, y2.cols);
    for (std::size_t i = 0; i < y2.rows; ++i)
        for (std::size_t j = 0; j < trans.size(); ++j) {
            const double sc = detail::clamp_scale(s_raw.at(i, j), clamp_bound);
            z2.at(i, j) = (y2.at(i, j) - t_out.at(i, j)) * std::exp(-sc);
        }
    if (!z2.all_finite())
        throw ComputeError("coupling layer " + std::to_string(layer_index) +
                           ": non-finite inverse");
    Matrix out = y;
    detail::put_columns(out, trans, z2);
    return out;
}

struct FlowForwardResult {
    Matrix u;
    std::vector<double> logdet;           // per row, summed over layers
    std::vector<CouplingCache> caches;    // filled only when requested
    std::vector<Matrix> layer_inputs;     // ditto
};

inline FlowForwardResult flow_forward(const FlowModel& model, const Matrix& z,
                                      bool want_caches = false) {
    if (z.cols != model.d_z)
        throw ValidationError("flow_forward: input width " + std::to_string(z.cols) +
                              " does not match d_z " + std::to_string(model.d_z));
    FlowForwardResult r;
    r.logdet.assign(z.rows, 0.0);
    if (want_caches) r.caches.resize(model.layers.size());
    Matrix cur = z;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (want_caches) r.layer_inputs.push_back(cur);
        cur = coupling_forward(model.layers[l], cur, model.clamp_bound, r.logdet,
                               want_caches ? &r.caches[l] : nullptr, l);
    }
    r.u = std::move(cur);
    return r;
}

inline Matrix flow_inverse(const FlowModel& model, const Matrix& u) {
    Matrix cur = u;
    for (std::size_t l = model.layers.size(); l-- > 0;)
        cur = coupling_inverse(model.layers[l], cur, model.clamp_bound, l);
    return cur;
}

struct FlowGradients {
    std::vector<MlpGradients> s_grads;
    std::vector<MlpGradients> t_grads;
};

inline FlowGradients zero_flow_gradients(const FlowModel& model) {
    FlowGradients g;
    for (const auto& layer : model.layers) {
        g.s_grads.push_back(zero_gradients(layer.s_net));
        g.t_grads.push_back(zero_gradients(layer.t_net));
    }
    return g;
}

/// Reverse-mode pass through the whole stack. du is dL/du per element,
/// dlogdet is dL/d(logdet_i) per row. Returns dL/dz.
inline Matrix flow_backward(const FlowModel& model, const FlowForwardResult& fwd, const Matrix& du,
                            const std::vector<double>& dlogdet, FlowGradients& grads) {
    if (fwd.caches.size() != model.layers.size())
        throw ValidationError("flow_backward: forward result carries no caches");
    Matrix delta = du;
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        const CouplingLayer& layer = model.layers[l];
        const CouplingCache& c = fwd.caches[l];
        const auto pass = layer.pass_indices();
        const auto trans = layer.trans_indices();

        Matrix dy1 = detail::take_columns(delta, pass);
        Matrix dy2 = detail::take_columns(delta, trans);

        Matrix dz2(dy2.rows, dy2.cols);
        Matrix ds_raw(dy2.rows, dy2.cols);
        Matrix dt = dy2;
        const double bound = model.clamp_bound;
        for (std::size_t i = 0; i < dy2.rows; ++i)
            for (std::size_t j = 0; j < dy2.cols; ++j) {
                const double es = c.exp_s.at(i, j);
                dz2.at(i, j) = dy2.at(i, j) * es;
                const double dsc = dy2.at(i, j) * c.z2.at(i, j) * es + dlogdet[i];
                const double th = std::tanh(c.s_raw.at(i, j) / bound);
                ds_raw.at(i, j) = dsc * (1.0 - th * th);
            }

        Matrix dz1_s = mlp_backward(layer.s_net, c.s_cache, ds_raw, grads.s_grads[l]);
        Matrix dz1_t = mlp_backward(layer.t_net, c.t_cache, dt, grads.t_grads[l]);
        Matrix dz1 = dy1;
        for (std::size_t i = 0; i < dz1.v.size(); ++i) dz1.v[i] += dz1_s.v[i] + dz1_t.v[i];

        Matrix dz(delta.rows, delta.cols);
        detail::put_columns(dz, pass, dz1);
        detail::put_columns(dz, trans, dz2);
        delta = std::move(dz);
    }
    return delta;
}

// ---------------------------------------------------------------------------
// scoring

/// Negative log-density under the standard-normal base distribution:
/// 0.5*||u||^2 + (d_z/2)*ln(2*pi) - logdet. Higher means more anomalous.
inline double anomaly_score(const std::vector<double>& u, double total_logdet, std::size_t d_z) {
    double sq = 0.0;
    for (double x : u) sq += x * x;
    return 0.5 * sq + 0.5 * double(d_z) * std::log(2.0 * M_PI) - total_logdet;
}

struct ScoreResult {
    std::string triplet_id;
    double score = 0.0;
    double logdet = 0.0;
    bool valid = true; // false when the raw score was non-finite before replacement
};

/// Replaces non-finite raw scores with the largest finite score in the
/// batch and marks them invalid.
inline void replace_nonfinite_scores(std::vector<ScoreResult>& scores) {
    if (scores.empty()) throw ValidationError("score batch is empty");
    double max_finite = -std::numeric_limits<double>::infinity();
    bool any_finite = false;
    for (const auto& s : scores)
        if (std::isfinite(s.score)) {
            any_finite = true;
            max_finite = std::max(max_finite, s.score);
        }
    if (!any_finite) throw ComputeError("score batch: all scores non-finite");
    for (auto& s : scores)
        if (!std::isfinite(s.score)) {
            s.score = max_finite;
            s.valid = false;
        }
}

inline std::vector<ScoreResult> score_batch(const FlowModel& model, const Matrix& latents,
                                            const std::vector<std::string>& ids = {}) {
    if (!model.frozen) throw ValidationError("score_batch: model is not frozen");
    if (latents.rows == 0) throw ValidationError("score_batch: empty batch");
    if (!ids.empty() && ids.size() != latents.rows)
        throw ValidationError("score_batch: id count does not match batch");

    // Scores must be computable even for wild inputs; non-finite rows are
    // replaced afterwards, so compute row by row and swallow per-row blowups.
    std::vector<ScoreResult> out(latents.rows);
    for (std::size_t i = 0; i < latents.rows; ++i) {
        ScoreResult r;
        r.triplet_id = ids.empty() ? std::to_string(i) : ids[i];
        Matrix row(1, latents.cols);
        std::copy_n(latents.row(i), latents.cols, row.row(0));
        try {
            FlowForwardResult f = flow_forward(model, row);
            r.logdet = f.logdet[0];
            r.score = anomaly_score(f.u.v, f.logdet[0], model.d_z);
        } catch (const ComputeError&) {
            r.score = std::numeric_limits<double>::quiet_NaN();
            r.logdet = std::numeric_limits<double>::quiet_NaN();
        }
        out[i] = std::move(r);
    }
    replace_nonfinite_scores(out);
    return out;
}

/// Training objective: batch mean of 0.5*||u||^2 - logdet. Minimizing it
/// maximizes the log-likelihood; the base-distribution constant is omitted.
inline double flow_loss(const Matrix& u, const std::vector<double>& logdet) {
    if (u.rows != logdet.size()) throw ValidationError("flow_loss: shape mismatch");
    if (u.rows == 0) throw ValidationError("flow_loss: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < u.rows; ++i) {
        double sq = 0.0;
        const double* r = u.row(i);
        for (std::size_t j = 0; j < u.cols; ++j) sq += r[j] * r[j];
        total += 0.5 * sq - logdet[i];
    }
    return total / double(u.rows);
}

// ---------------------------------------------------------------------------
// construction and training

struct FlowArchConfig {
    std::size_t layers = 3;
    std::size_t st_hidden = 128;
    std::size_t st_fc_layers = 3; // weight matrices per s/t net
    std::vector<MaskPattern> masks; // empty -> default pattern rule
    double clamp_bound = 4.0;
};

/// Default masks: the first two layers alternate offset patterns so every
/// coordinate is transformed at least once, the last uses the half mask.
inline std::vector<MaskPattern> default_mask_patterns(std::size_t layers) {
    std::vector<MaskPattern> out;
    for (std::size_t i = 0; i < layers; ++i) {
        if (i + 1 == layers && layers >= 2) out.push_back(MaskPattern::Half);
        else out.push_back(i % 2 == 0 ? MaskPattern::Alternating : MaskPattern::AlternatingShifted);
    }
    return out;
}

/// Builds a flow whose final s/t layers are zero so it starts as the
/// identity map.
inline FlowModel make_flow(std::size_t d_z, const FlowArchConfig& arch, std::uint64_t seed) {
    if (arch.layers < 1) throw ValidationError("make_flow: need at least one coupling layer");
    if (arch.st_fc_layers < 1) throw ValidationError("make_flow: s/t nets need at least one layer");
    std::vector<MaskPattern> masks = arch.masks.empty() ? default_mask_patterns(arch.layers) : arch.masks;
    if (masks.size() != arch.layers)
        throw ValidationError("make_flow: mask pattern count does not match layer count");

    FlowModel model;
    model.d_z = d_z;
    model.clamp_bound = arch.clamp_bound;
    Rng seeder(derive_seed(seed, Stage::FlowInit));
    for (std::size_t l = 0; l < arch.layers; ++l) {
        CouplingLayer layer;
        layer.pattern = masks[l];
        layer.mask = make_mask(d_z, masks[l]);
        const std::size_t n_pass = layer.pass_indices().size();
        const std::size_t n_trans = layer.trans_indices().size();
        std::vector<std::size_t> dims;
        dims.push_back(n_pass);
        for (std::size_t i = 0; i + 1 < arch.st_fc_layers; ++i) dims.push_back(arch.st_hidden);
        dims.push_back(n_trans);
        std::vector<Activation> acts(dims.size() - 1, Activation::Relu);
        acts.back() = Activation::Identity;
        layer.s_net = init_params(seeder.next_u64(), dims, acts, InitScheme::XavierUniform, true);
        layer.t_net = init_params(seeder.next_u64(), dims, acts, InitScheme::XavierUniform, true);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

inline std::vector<std::span<double>> flow_param_tensors(FlowModel& model) {
    std::vector<std::span<double>> out;
    for (auto& layer : model.layers) {
        for (auto t : param_tensors(layer.s_net)) out.push_back(t);
        for (auto t : param_tensors(layer.t_net)) out.push_back(t);
    }
    return out;
}

inline std::vector<std::span<const double>> flow_grad_tensors(const FlowGradients& grads) {
    std::vector<std::span<const double>> out;
    for (std::size_t l = 0; l < grads.s_grads.size(); ++l) {
        for (auto t : grad_tensors(grads.s_grads[l])) out.push_back(t);
        for (auto t : grad_tensors(grads.t_grads[l])) out.push_back(t);
    }
    return out;
}

struct FlowTrainConfig {
    FlowArchConfig arch;
    std::size_t epochs = 1000;
    double lr = 1e-4;
    double weight_decay = 0.01; // AdamW, decoupled
    double plateau_factor = 0.8;
    std::size_t plateau_patience = 30;
    double plateau_min_lr = 1e-7;
    std::size_t full_batch_limit = 4096;
    std::size_t batch_size = 256;
};

struct FlowTrainResult {
    FlowModel model;
    std::vector<double> epoch_losses;
    double final_lr = 0.0;
};

inline FlowTrainResult flow_train(const Matrix& latents, const FlowTrainConfig& config,
                                  std::uint64_t seed) {
    if (latents.rows == 0) throw ValidationError("flow_train: empty training data");
    FlowModel model = make_flow(latents.cols, config.arch, seed);

    auto params = flow_param_tensors(model);
    AdamState adam = AdamState::make(total_size(params), config.lr, config.weight_decay);
    PlateauScheduler sched;
    sched.factor = config.plateau_factor;
    sched.patience = config.plateau_patience;
    sched.min_lr = config.plateau_min_lr;
    sched.lr = config.lr;

    auto step = [&](const Matrix& batch) {
        FlowForwardResult fwd = flow_forward(model, batch, true);
        const double loss = flow_loss(fwd.u, fwd.logdet);

        const double inv_n = 1.0 / double(batch.rows);
        Matrix du(fwd.u.rows, fwd.u.cols);
        for (std::size_t i = 0; i < du.v.size(); ++i) du.v[i] = fwd.u.v[i] * inv_n;
        std::vector<double> dlogdet(batch.rows, -inv_n);

        FlowGradients grads = zero_flow_gradients(model);
        flow_backward(model, fwd, du, dlogdet, grads);
        adam_step(adam, params, flow_grad_tensors(grads));
        return loss;
    };

    FlowTrainResult result;
    const std::uint64_t shuffle_seed = derive_seed(seed, Stage::FlowShuffle);
    const bool full_batch = latents.rows <= config.full_batch_limit;
    Rng shuffle_rng(shuffle_seed);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double epoch_loss;
        if (full_batch) {
            epoch_loss = step(latents);
        } else {
            std::vector<std::size_t> order(latents.rows);
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            shuffle_rng.shuffle(order);
            double total = 0.0;
            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                const std::size_t n = std::min(config.batch_size, order.size() - start);
                Matrix batch(n, latents.cols);
                for (std::size_t i = 0; i < n; ++i)
                    std::copy_n(latents.row(order[start + i]), latents.cols, batch.row(i));
                total += step(batch) * double(n);
            }
            epoch_loss = total / double(latents.rows);
        }
        if (!std::isfinite(epoch_loss))
            throw ComputeError("flow_train: diverged (non-finite loss) at epoch " +
                               std::to_string(epoch + 1));
        result.epoch_losses.push_back(epoch_loss);
        adam.lr = sched.step(epoch_loss);
    }
    result.final_lr = sched.lr;
    model.frozen = true;
    result.model = std::move(model);
    return result;
}

} // namespace relflow
