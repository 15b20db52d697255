#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "relflow/errors.hpp"

namespace relflow {

/// Adam with bias correction; a positive weight_decay turns it into AdamW
/// (decay applied to the parameter directly, decoupled from the gradient).
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::int64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;

    static AdamState make(std::size_t param_count, double lr, double weight_decay = 0.0) {
        AdamState s;
        s.lr = lr;
        s.weight_decay = weight_decay;
        s.m.assign(param_count, 0.0);
        s.v.assign(param_count, 0.0);
        return s;
    }
};

/// One optimizer step over the flattened parameter views. Non-finite
/// gradients reject the whole step; parameters are left untouched.
inline void adam_step(AdamState& state, std::vector<std::span<double>> params,
                      const std::vector<std::span<const double>>& grads) {
    std::size_t n = 0;
    for (const auto& g : grads) n += g.size();
    if (state.m.size() != n)
        throw ValidationError("adam_step: state size " + std::to_string(state.m.size()) +
                              " does not match parameter count " + std::to_string(n));
    if (params.size() != grads.size())
        throw ValidationError("adam_step: tensor count mismatch");
    for (std::size_t t = 0; t < grads.size(); ++t) {
        if (params[t].size() != grads[t].size())
            throw ValidationError("adam_step: tensor " + std::to_string(t) + " shape mismatch");
        for (double g : grads[t])
            if (!std::isfinite(g))
                throw ComputeError("adam_step: non-finite gradient in tensor " +
                                   std::to_string(t) + ", no update applied");
    }

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    std::size_t k = 0;
    for (std::size_t t = 0; t < grads.size(); ++t) {
        double* p = params[t].data();
        const double* g = grads[t].data();
        for (std::size_t i = 0; i < grads[t].size(); ++i, ++k) {
            state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g[i];
            state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = state.m[k] / bc1;
            const double vhat = state.v[k] / bc2;
            double upd = state.lr * mhat / (std::sqrt(vhat) + state.eps);
            if (state.weight_decay > 0.0) upd += state.lr * state.weight_decay * p[i];
            p[i] -= upd;
        }
    }
}

/// Reduce-on-plateau: after `patience` consecutive epochs without a strict
/// improvement of the best loss, lr <- max(lr * factor, min_lr).
struct PlateauScheduler {
    double factor = 0.8;
    std::size_t patience = 30;
    double min_lr = 1e-7;
    double lr = 1e-4;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t epochs_since_improvement = 0;

    double step(double epoch_loss) {
        if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
            epochs_since_improvement = 0;
        } else {
            ++epochs_since_improvement;
            if (epochs_since_improvement >= patience) {
                lr = std::max(lr * factor, min_lr);
                epochs_since_improvement = 0;
            }
        }
        return lr;
    }
};

} // namespace relflow
