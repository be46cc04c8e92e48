#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bonmf/data.hpp"
#include "bonmf/error.hpp"
#include "bonmf/model.hpp"
#include "bonmf/numerics.hpp"
#include "bonmf/rng.hpp"

namespace bonmf {

/// Biased latent-factor model: mean + b_u + b_i + p_u . q_i
struct SvdModel {
    double global_mean = 0.0;
    std::vector<double> user_bias;
    std::vector<double> item_bias;
    DenseMatrix user_factors;  // n_users x rank
    DenseMatrix item_factors;  // n_items x rank
    std::vector<std::uint8_t> user_known;
    std::vector<std::uint8_t> item_known;

    std::size_t rank() const noexcept { return user_factors.cols(); }
    std::size_t n_users() const noexcept { return user_bias.size(); }
    std::size_t n_items() const noexcept { return item_bias.size(); }

    bool knows_user(std::size_t u) const noexcept { return u < user_known.size() && user_known[u]; }
    bool knows_item(std::size_t i) const noexcept { return i < item_known.size() && item_known[i]; }

    bool operator==(const SvdModel&) const = default;
};

/// Unknown entities (never seen in training, or kUnknownEntity) contribute
/// no terms, so a cold item scores global_mean + b_u.
inline double svd_predict(const SvdModel& model, std::size_t user_idx, std::size_t item_idx) {
    const bool ku = model.knows_user(user_idx);
    const bool ki = model.knows_item(item_idx);
    double prediction = model.global_mean;
    if (ku) prediction += model.user_bias[user_idx];
    if (ki) prediction += model.item_bias[item_idx];
    if (ku && ki) prediction += dot(model.user_factors.row(user_idx), model.item_factors.row(item_idx));
    return prediction;
}

inline double svd_predict_clipped(const SvdModel& model, std::size_t user_idx, std::size_t item_idx,
                                  double lo = kRatingMin, double hi = kRatingMax) {
    return std::clamp(svd_predict(model, user_idx, item_idx), lo, hi);
}

struct SvdConfig {
    std::size_t rank = 50;
    std::size_t epochs = 20;
    double learning_rate = 0.005;
    double regularization = 0.02;
    double init_stddev = 0.1;
    std::uint64_t seed = 42;

    void validate() const {
        if (epochs == 0) throw UsageError("svd: epochs must be >= 1");
        if (!(learning_rate > 0.0)) throw UsageError("svd: learning rate must be > 0");
        if (!(regularization >= 0.0)) throw UsageError("svd: regularization must be >= 0");
    }
};

struct SvdTrainResult {
    SvdModel model;
    std::vector<double> epoch_train_mse;  // full-pass training MSE after each epoch
};

/// Funk-style SGD over the given training records, one seeded shuffle per
/// epoch. The global mean is fixed to the training mean.
inline SvdTrainResult svd_train(const InteractionSet& data, std::span<const std::size_t> train, const SvdConfig& config) {
    config.validate();
    if (train.empty()) throw DataError("svd_train: no training records");

    Rng rng(config.seed);
    SvdTrainResult result;
    SvdModel& m = result.model;
    m.user_bias.assign(data.n_users(), 0.0);
    m.item_bias.assign(data.n_items(), 0.0);
    m.user_factors = gaussian_init(data.n_users(), config.rank, config.init_stddev, rng);
    m.item_factors = gaussian_init(data.n_items(), config.rank, config.init_stddev, rng);
    m.user_known.assign(data.n_users(), 0);
    m.item_known.assign(data.n_items(), 0);

    double sum = 0.0;
    for (auto r : train) {
        sum += data.rating(r);
        m.user_known[data.user_of(r)] = 1;
        m.item_known[data.item_of(r)] = 1;
    }
    m.global_mean = sum / static_cast<double>(train.size());

    const double lr = config.learning_rate;
    const double reg = config.regularization;
    std::vector<std::size_t> order(train.begin(), train.end());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        for (auto r : order) {
            const std::size_t u = data.user_of(r);
            const std::size_t i = data.item_of(r);
            const double err = data.rating(r) - svd_predict(m, u, i);
            m.user_bias[u] += lr * (err - reg * m.user_bias[u]);
            m.item_bias[i] += lr * (err - reg * m.item_bias[i]);
            auto p = m.user_factors.row(u);
            auto q = m.item_factors.row(i);
            for (std::size_t k = 0; k < p.size(); ++k) {
                const double pk = p[k];
                p[k] += lr * (err * q[k] - reg * pk);
                q[k] += lr * (err * pk - reg * q[k]);
            }
        }
        double sq = 0.0;
        for (auto r : train) {
            const double e = data.rating(r) - svd_predict(m, data.user_of(r), data.item_of(r));
            sq += e * e;
        }
        const double mse = sq / static_cast<double>(train.size());
        if (!std::isfinite(mse))
            throw NumericError("svd_train diverged at epoch " + std::to_string(epoch + 1) +
                               "; try a smaller learning rate");
        result.epoch_train_mse.push_back(mse);
    }
    return result;
}

}  // namespace bonmf
