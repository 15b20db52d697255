#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "relflow/errors.hpp"

namespace relflow {

/// Compares analytic gradients against central finite differences,
/// coordinate by coordinate, and returns the worst relative error.
/// loss_fn must read the parameters through the same storage the spans
/// view; each coordinate is perturbed in place and restored.
inline double grad_check(const std::function<double()>& loss_fn,
                         std::vector<std::span<double>> params,
                         const std::vector<std::span<const double>>& analytic, double eps) {
    if (eps <= 0.0) throw ValidationError("grad_check: eps must be positive");
    if (params.size() != analytic.size())
        throw ValidationError("grad_check: tensor count mismatch");
    double worst = 0.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size() != analytic[t].size())
            throw ValidationError("grad_check: tensor shape mismatch");
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            double& p = params[t][i];
            const double saved = p;
            p = saved + eps;
            const double hi = loss_fn();
            p = saved - eps;
            const double lo = loss_fn();
            p = saved;
            if (!std::isfinite(hi) || !std::isfinite(lo))
                throw ComputeError("grad_check: non-finite loss in probed neighborhood");
            const double fd = (hi - lo) / (2.0 * eps);
            const double an = analytic[t][i];
            const double denom = std::max(std::abs(fd) + std::abs(an), 1e-6);
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    return worst;
}

} // namespace relflow
