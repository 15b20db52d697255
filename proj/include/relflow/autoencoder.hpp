#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "relflow/errors.hpp"
#include "relflow/mlp.hpp"
#include "relflow/optim.hpp"
#include "relflow/rng.hpp"

namespace relflow {

/// MLP autoencoder compressing triplet vectors to a latent space. After
/// training the model is frozen and only the encoder is used downstream.
struct AeModel {
    MlpParams encoder; // input_dim -> latent_dim
    MlpParams decoder; // latent_dim -> input_dim, mirrored widths
    std::size_t input_dim = 0;
    std::size_t latent_dim = 0;
    bool frozen = false;
};

/// Four linear layers from input to latent; hidden widths interpolate
/// linearly, except the canonical 900->512 architecture which is frozen as
/// 900 -> 800 -> 700 -> 600 -> 512.
inline std::vector<std::size_t> ae_widths(std::size_t input_dim, std::size_t latent_dim) {
    if (input_dim == 900 && latent_dim == 512) return {900, 800, 700, 600, 512};
    std::vector<std::size_t> w(5);
    for (std::size_t i = 0; i <= 4; ++i) {
        double x = double(input_dim) + (double(latent_dim) - double(input_dim)) * double(i) / 4.0;
        w[i] = static_cast<std::size_t>(std::llround(x));
    }
    return w;
}

inline AeModel make_ae(std::size_t input_dim, std::size_t latent_dim, std::uint64_t seed,
                       std::vector<std::size_t> widths = {}) {
    if (latent_dim >= input_dim)
        throw ValidationError("make_ae: latent dimension " + std::to_string(latent_dim) +
                              " must be smaller than input dimension " + std::to_string(input_dim));
    if (latent_dim == 0) throw ValidationError("make_ae: latent dimension must be >= 1");
    if (widths.empty()) widths = ae_widths(input_dim, latent_dim);
    if (widths.front() != input_dim || widths.back() != latent_dim)
        throw ValidationError("make_ae: width chain endpoints do not match dimensions");

    // ReLU between layers, no activation on the latent or the reconstruction.
    std::vector<Activation> acts(widths.size() - 1, Activation::Relu);
    acts.back() = Activation::Identity;

    AeModel model;
    model.input_dim = input_dim;
    model.latent_dim = latent_dim;
    model.encoder = init_params(derive_seed(seed, Stage::AeInit), widths, acts);
    std::vector<std::size_t> rev(widths.rbegin(), widths.rend());
    model.decoder = init_params(splitmix64(derive_seed(seed, Stage::AeInit)), rev, acts);
    return model;
}

/// Mean over the batch of the squared reconstruction error.
inline double ae_loss(const AeModel& model, const Matrix& batch) {
    if (batch.cols != model.input_dim)
        throw ValidationError("ae_loss: vector length " + std::to_string(batch.cols) +
                              " does not match model input " + std::to_string(model.input_dim));
    if (batch.rows == 0) throw ValidationError("ae_loss: empty batch");
    Matrix recon = mlp_forward(model.decoder, mlp_forward(model.encoder, batch));
    double total = 0.0;
    for (std::size_t i = 0; i < batch.v.size(); ++i) {
        const double d = batch.v[i] - recon.v[i];
        total += d * d;
    }
    const double loss = total / double(batch.rows);
    if (!std::isfinite(loss)) throw ComputeError("ae_loss: non-finite loss");
    return loss;
}

inline Matrix encode(const AeModel& model, const Matrix& batch) {
    if (!model.frozen) throw ValidationError("encode: model is not frozen");
    if (batch.cols != model.input_dim)
        throw ValidationError("encode: vector length " + std::to_string(batch.cols) +
                              " does not match model input " + std::to_string(model.input_dim));
    return mlp_forward(model.encoder, batch);
}

inline std::vector<double> encode(const AeModel& model, const std::vector<double>& vec) {
    Matrix m(1, vec.size(), vec);
    return encode(model, m).v;
}

inline Matrix decode(const AeModel& model, const Matrix& latents) {
    if (latents.cols != model.latent_dim)
        throw ValidationError("decode: latent length " + std::to_string(latents.cols) +
                              " does not match model latent dimension " +
                              std::to_string(model.latent_dim));
    return mlp_forward(model.decoder, latents);
}

inline std::vector<double> decode(const AeModel& model, const std::vector<double>& latent) {
    Matrix m(1, latent.size(), latent);
    return decode(model, m).v;
}

struct AeTrainConfig {
    std::size_t latent_dim = 512;
    std::size_t epochs = 100;
    double lr = 1e-3;
    std::vector<std::size_t> widths;          // empty -> ae_widths rule
    std::size_t full_batch_limit = 4096;      // above this, shuffled mini-batches
    std::size_t batch_size = 256;
};

struct AeTrainResult {
    AeModel model;
    std::vector<double> epoch_losses;
};

namespace detail {

/// Shared epoch driver for both trainers: full batch at desk scale,
/// shuffled mini-batches beyond the limit. step(batch) returns the batch
/// loss; the epoch loss is the sample-weighted mean.
template <typename StepFn>
std::vector<double> run_epochs(const Matrix& data, std::size_t epochs,
                               std::size_t full_batch_limit, std::size_t batch_size,
                               std::uint64_t shuffle_seed, const char* what, StepFn step) {
    std::vector<double> losses;
    const bool full_batch = data.rows <= full_batch_limit;
    Rng shuffle_rng(shuffle_seed);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        double epoch_loss;
        if (full_batch) {
            epoch_loss = step(data);
        } else {
            std::vector<std::size_t> order(data.rows);
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            shuffle_rng.shuffle(order);
            double total = 0.0;
            for (std::size_t start = 0; start < order.size(); start += batch_size) {
                const std::size_t n = std::min(batch_size, order.size() - start);
                Matrix batch(n, data.cols);
                for (std::size_t i = 0; i < n; ++i)
                    std::copy_n(data.row(order[start + i]), data.cols, batch.row(i));
                total += step(batch) * double(n);
            }
            epoch_loss = total / double(data.rows);
        }
        if (!std::isfinite(epoch_loss))
            throw ComputeError(std::string(what) + ": diverged (non-finite loss) at epoch " +
                               std::to_string(epoch + 1));
        losses.push_back(epoch_loss);
    }
    return losses;
}

} // namespace detail

/// Trains the autoencoder on normal triplet vectors with plain Adam and
/// returns the frozen model plus the loss trajectory.
inline AeTrainResult ae_train(const Matrix& data, const AeTrainConfig& config, std::uint64_t seed) {
    if (data.rows == 0) throw ValidationError("ae_train: empty training data");
    AeModel model = make_ae(data.cols, config.latent_dim, seed, config.widths);

    auto enc_t = param_tensors(model.encoder);
    auto dec_t = param_tensors(model.decoder);
    std::vector<std::span<double>> all_params(enc_t);
    all_params.insert(all_params.end(), dec_t.begin(), dec_t.end());
    AdamState adam = AdamState::make(total_size(all_params), config.lr);

    auto step = [&](const Matrix& batch) {
        ForwardCache enc_cache, dec_cache;
        Matrix z = mlp_forward(model.encoder, batch, &enc_cache);
        Matrix recon = mlp_forward(model.decoder, z, &dec_cache);

        double total = 0.0;
        Matrix drecon(recon.rows, recon.cols);
        const double scale = 2.0 / double(batch.rows);
        for (std::size_t i = 0; i < batch.v.size(); ++i) {
            const double d = recon.v[i] - batch.v[i];
            total += d * d;
            drecon.v[i] = scale * d;
        }

        MlpGradients enc_g = zero_gradients(model.encoder);
        MlpGradients dec_g = zero_gradients(model.decoder);
        Matrix dz = mlp_backward(model.decoder, dec_cache, drecon, dec_g);
        mlp_backward(model.encoder, enc_cache, dz, enc_g);

        auto ge = grad_tensors(enc_g);
        auto gd = grad_tensors(dec_g);
        std::vector<std::span<const double>> all_grads(ge);
        all_grads.insert(all_grads.end(), gd.begin(), gd.end());
        adam_step(adam, all_params, all_grads);
        return total / double(batch.rows);
    };

    AeTrainResult result;
    result.epoch_losses =
        detail::run_epochs(data, config.epochs, config.full_batch_limit, config.batch_size,
                           derive_seed(seed, Stage::AeShuffle), "ae_train", step);
    model.frozen = true;
    result.model = std::move(model);
    return result;
}

} // namespace relflow
