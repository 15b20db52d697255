#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "relflow/errors.hpp"
#include "relflow/matrix.hpp"
#include "relflow/rng.hpp"

namespace relflow {

enum class Activation { Relu, Identity };

/// One fully connected layer: y = x * w + b, then the activation.
/// w is (input_dim x output_dim) so batches multiply from the left.
struct DenseLayer {
    Matrix w;
    std::vector<double> b;
    Activation act = Activation::Identity;

    std::size_t input_dim() const { return w.rows; }
    std::size_t output_dim() const { return w.cols; }
};

struct MlpParams {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.front().input_dim(); }
    std::size_t output_dim() const { return layers.back().output_dim(); }
};

/// Same shape as the parameters they differentiate.
struct MlpGradients {
    std::vector<Matrix> dw;
    std::vector<std::vector<double>> db;
};

struct ForwardCache {
    std::vector<Matrix> inputs;   // per-layer input batch
    std::vector<Matrix> preacts;  // per-layer pre-activation batch
};

enum class InitScheme { XavierUniform, Zero };

/// Builds an MLP over the given width chain. Weights are Xavier-uniform
/// (bound sqrt(6/(fan_in+fan_out))), biases zero, deterministic per seed.
/// When zero_final_layer is set the last layer starts as the zero map.
inline MlpParams init_params(std::uint64_t seed, const std::vector<std::size_t>& dims,
                             const std::vector<Activation>& acts,
                             InitScheme scheme = InitScheme::XavierUniform,
                             bool zero_final_layer = false) {
    if (dims.size() < 2) throw ValidationError("init_params: need at least two dims");
    if (acts.size() != dims.size() - 1)
        throw ValidationError("init_params: activation count " + std::to_string(acts.size()) +
                              " does not match layer count " + std::to_string(dims.size() - 1));
    Rng rng(seed);
    MlpParams params;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        layer.w = Matrix(dims[l], dims[l + 1]);
        layer.b.assign(dims[l + 1], 0.0);
        layer.act = acts[l];
        const bool zero = scheme == InitScheme::Zero ||
                          (zero_final_layer && l + 2 == dims.size());
        if (!zero) {
            const double bound = std::sqrt(6.0 / double(dims[l] + dims[l + 1]));
            for (double& x : layer.w.v) x = rng.uniform(-bound, bound);
        }
        params.layers.push_back(std::move(layer));
    }
    return params;
}

inline MlpGradients zero_gradients(const MlpParams& params) {
    MlpGradients g;
    for (const auto& layer : params.layers) {
        g.dw.emplace_back(layer.w.rows, layer.w.cols);
        g.db.emplace_back(layer.b.size(), 0.0);
    }
    return g;
}

/// Runs the batch through the net. The cache keeps what the backward pass
/// needs; pass nullptr when only the output matters.
inline Matrix mlp_forward(const MlpParams& params, const Matrix& x, ForwardCache* cache = nullptr) {
    if (x.cols != params.input_dim())
        throw ValidationError("mlp_forward: input width " + std::to_string(x.cols) +
                              " does not match first layer input " +
                              std::to_string(params.input_dim()));
    if (cache) {
        cache->inputs.clear();
        cache->preacts.clear();
    }
    Matrix cur = x;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const DenseLayer& layer = params.layers[l];
        Matrix z = matmul(cur, layer.w);
        for (std::size_t i = 0; i < z.rows; ++i) {
            double* zr = z.row(i);
            for (std::size_t j = 0; j < z.cols; ++j) zr[j] += layer.b[j];
        }
        if (!z.all_finite())
            throw ComputeError("mlp_forward: non-finite value at layer " + std::to_string(l));
        if (cache) {
            cache->inputs.push_back(std::move(cur));
            cache->preacts.push_back(z);
        }
        if (layer.act == Activation::Relu)
            for (double& v : z.v) v = v > 0.0 ? v : 0.0;
        cur = std::move(z);
    }
    return cur;
}

/// Exact reverse-mode derivatives of mlp_forward. Returns the gradient with
/// respect to the input batch and accumulates parameter gradients.
inline Matrix mlp_backward(const MlpParams& params, const ForwardCache& cache, const Matrix& dy,
                           MlpGradients& grads) {
    if (cache.inputs.size() != params.layers.size())
        throw ValidationError("mlp_backward: cache depth " + std::to_string(cache.inputs.size()) +
                              " does not match layer count " +
                              std::to_string(params.layers.size()));
    if (dy.cols != params.output_dim() || dy.rows != cache.inputs.front().rows)
        throw ValidationError("mlp_backward: cotangent shape " + dy.shape_str() +
                              " does not match forward output");
    Matrix delta = dy;
    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const DenseLayer& layer = params.layers[li];
        const Matrix& z = cache.preacts[li];
        if (layer.act == Activation::Relu) {
            for (std::size_t i = 0; i < delta.v.size(); ++i)
                if (z.v[i] <= 0.0) delta.v[i] = 0.0;
        }
        Matrix dw = matmul_at_b(cache.inputs[li], delta);
        for (std::size_t i = 0; i < dw.v.size(); ++i) grads.dw[li].v[i] += dw.v[i];
        for (std::size_t i = 0; i < delta.rows; ++i) {
            const double* dr = delta.row(i);
            for (std::size_t j = 0; j < delta.cols; ++j) grads.db[li][j] += dr[j];
        }
        delta = matmul_a_bt(delta, layer.w);
    }
    return delta;
}

/// Flat views over every trainable tensor, in a fixed order shared by
/// parameters and gradients. The basis for the optimizer and grad checks.
inline std::vector<std::span<double>> param_tensors(MlpParams& params) {
    std::vector<std::span<double>> t;
    for (auto& layer : params.layers) {
        t.emplace_back(layer.w.v);
        t.emplace_back(layer.b);
    }
    return t;
}

inline std::vector<std::span<const double>> grad_tensors(const MlpGradients& grads) {
    std::vector<std::span<const double>> t;
    for (std::size_t i = 0; i < grads.dw.size(); ++i) {
        t.emplace_back(grads.dw[i].v);
        t.emplace_back(grads.db[i]);
    }
    return t;
}

inline std::size_t total_size(const std::vector<std::span<double>>& tensors) {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

} // namespace relflow
