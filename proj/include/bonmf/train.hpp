#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bonmf/data.hpp"
#include "bonmf/error.hpp"
#include "bonmf/eval.hpp"
#include "bonmf/model.hpp"
#include "bonmf/rng.hpp"

namespace bonmf {

struct AdamParams {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 256;
    AdamParams adam;
    double l2_embedding = 0.0;  // adds l2 * row to each touched embedding row's gradient
    std::uint64_t seed = 42;
    bool shuffle = true;
    bool init_output_bias_to_mean = true;

    void validate() const {
        if (epochs == 0) throw UsageError("train: epochs must be >= 1");
        if (batch_size == 0) throw UsageError("train: batch_size must be >= 1");
        if (!(adam.learning_rate > 0.0)) throw UsageError("train: learning_rate must be > 0");
        if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0) || !(adam.beta2 > 0.0 && adam.beta2 < 1.0))
            throw UsageError("train: Adam betas must lie in (0,1)");
        if (!(adam.epsilon > 0.0)) throw UsageError("train: Adam epsilon must be > 0");
        if (!(l2_embedding >= 0.0)) throw UsageError("train: l2_embedding must be >= 0");
    }
};

/// First and second moments mirroring each parameter block, plus the step count.
struct AdamState {
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> second;
    std::uint64_t step = 0;

    AdamState() = default;
    explicit AdamState(std::span<const std::span<double>> params) {
        for (const auto& block : params) {
            first.emplace_back(block.size(), 0.0);
            second.emplace_back(block.size(), 0.0);
        }
    }
};

/// One bias-corrected Adam update over every block; increments state.step once.
inline void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                      AdamState& state, const AdamParams& hp) {
    if (params.size() != grads.size()) throw DimensionError("adam_step: gradient blocks", params.size(), grads.size());
    if (state.first.size() != params.size()) throw DimensionError("adam_step: state blocks", params.size(), state.first.size());
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size() != grads[b].size())
            throw DimensionError("adam_step: block " + std::to_string(b), params[b].size(), grads[b].size());
        if (state.first[b].size() != params[b].size())
            throw DimensionError("adam_step: state block " + std::to_string(b), params[b].size(), state.first[b].size());
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(hp.beta1, t);
    const double correction2 = 1.0 - std::pow(hp.beta2, t);
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto p = params[b];
        const auto g = grads[b];
        auto& m = state.first[b];
        auto& v = state.second[b];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g[j];
            v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g[j] * g[j];
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            p[j] -= hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.epsilon);
        }
    }
}

struct EpochRecord {
    double train_loss = 0.0;  // mean per-example squared error over the epoch
    double seconds = 0.0;
    std::optional<double> heldout_mse;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

/// Called after each epoch; the returned value is recorded as held-out MSE.
using HeldoutProbe = std::function<double(const BonmfModel&)>;

/// Mini-batch Adam on the mean squared error of each batch. All enabled
/// modalities are resolved for every training record before the first step.
inline TrainHistory fit(BonmfModel& model, const InteractionSet& data, std::span<const std::size_t> train,
                        const FeatureIndex& features, const TrainConfig& config, const HeldoutProbe& probe = {}) {
    config.validate();
    if (train.empty()) throw DataError("fit: no training records");
    if (model.n_users() != data.n_users() || model.n_items() != data.n_items())
        throw DimensionError("fit: model vocabulary vs data (users*items)", model.n_users() * model.n_items(),
                             data.n_users() * data.n_items());

    const auto missing = features.missing(model.config().mask, train);
    if (!missing.empty()) {
        std::string listing = " (" + std::to_string(missing.size()) + " missing:";
        for (std::size_t k = 0; k < std::min<std::size_t>(10, missing.size()); ++k) listing += " " + missing[k];
        listing += missing.size() > 10 ? " ...)" : ")";
        const auto colon = missing.front().find(':');
        throw MissingFeature(missing.front().substr(0, colon), missing.front().substr(colon + 1), listing);
    }

    std::vector<std::uint8_t> known_users(data.n_users(), 0);
    std::vector<std::uint8_t> known_items(data.n_items(), 0);
    double rating_sum = 0.0;
    for (auto r : train) {
        known_users[data.user_of(r)] = 1;
        known_items[data.item_of(r)] = 1;
        rating_sum += data.rating(r);
    }
    model.set_known(std::move(known_users), std::move(known_items));

    auto params = model.parameter_blocks();
    if (config.init_output_bias_to_mean) params[params.size() - 3][0] = rating_sum / static_cast<double>(train.size());

    AdamState state(params);
    GradientSet grads = model.make_gradient_set();
    const std::size_t id_dim = model.user_table().cols();
    std::vector<double> user_grad(model.user_table().span().size(), 0.0);
    std::vector<double> item_grad(model.item_table().span().size(), 0.0);
    std::vector<std::span<const double>> grad_blocks;
    for (const auto& layer : grads.layers) {
        grad_blocks.push_back(layer.weights.span());
        grad_blocks.push_back(layer.bias.span());
    }
    grad_blocks.push_back(user_grad);
    grad_blocks.push_back(item_grad);

    auto scatter = [&](const std::map<std::size_t, DenseVector>& rows, const DenseMatrix& table, std::vector<double>& dense) {
        for (const auto& [idx, g] : rows)
            for (std::size_t k = 0; k < id_dim; ++k)
                dense[idx * id_dim + k] = g[k] + config.l2_embedding * table(idx, k);
    };
    auto unscatter = [&](const std::map<std::size_t, DenseVector>& rows, std::vector<double>& dense) {
        for (const auto& [idx, g] : rows) std::fill_n(dense.begin() + static_cast<std::ptrdiff_t>(idx * id_dim), id_dim, 0.0);
    };

    Rng rng(config.seed);
    std::vector<std::size_t> order(train.begin(), train.end());
    TrainHistory history;
    ForwardCache cache;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        if (config.shuffle) rng.shuffle(std::span(order));
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            const double scale = 1.0 / static_cast<double>(end - begin);
            grads.clear();
            for (std::size_t p = begin; p < end; ++p) {
                const auto r = order[p];
                const auto u = data.user_of(r);
                const auto i = data.item_of(r);
                const double prediction = model.forward(u, i, features.inputs(u, i), cache);
                const auto term = mse_loss(prediction, data.rating(r));
                if (!std::isfinite(term.loss))
                    throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch + 1) + ", record " +
                                       std::to_string(r) + "; try a smaller learning rate");
                epoch_loss += term.loss;
                model.backward(cache, term.dloss_dpred * scale, grads);
            }
            scatter(grads.user_rows, model.user_table(), user_grad);
            scatter(grads.item_rows, model.item_table(), item_grad);
            params = model.parameter_blocks();
            adam_step(params, grad_blocks, state, config.adam);
            unscatter(grads.user_rows, user_grad);
            unscatter(grads.item_rows, item_grad);
        }
        EpochRecord record;
        record.train_loss = epoch_loss / static_cast<double>(order.size());
        if (probe) record.heldout_mse = probe(model);
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        history.epochs.push_back(record);
    }
    return history;
}

using ModelFactory = std::function<BonmfModel(std::size_t n_users, std::size_t n_items)>;

struct CrossValidation {
    std::vector<EvalReport> folds;
    EvalReport mean;
};

inline EvalReport mean_report(std::span<const EvalReport> reports) {
    if (reports.empty()) throw UsageError("mean_report: no reports");
    EvalReport mean;
    mean.k = reports.front().k;
    const double n = static_cast<double>(reports.size());
    for (const auto& r : reports) {
        mean.mse += r.mse / n;
        mean.precision_at_k += r.precision_at_k / n;
        mean.ndcg_at_k += r.ndcg_at_k / n;
        mean.n_test_records += r.n_test_records;
        mean.n_users_scored += r.n_users_scored;
        mean.n_users_skipped += r.n_users_skipped;
    }
    mean.config = reports.front().config;
    mean.config["aggregate"] = "mean of " + std::to_string(reports.size()) + " folds";
    return mean;
}

/// Trains a fresh model per fold and evaluates it on the held-out fold.
inline CrossValidation cross_validate(const ModelFactory& factory, const InteractionSet& data, const FeatureIndex& features,
                                      std::size_t k, std::uint64_t seed, const TrainConfig& train_config,
                                      const EvalOptions& options) {
    const auto plans = kfold(data, k, seed);
    CrossValidation out;
    for (std::size_t f = 0; f < plans.size(); ++f) {
        try {
            BonmfModel model = factory(data.n_users(), data.n_items());
            fit(model, data, plans[f].train, features, train_config);
            auto report = evaluate(model, data, features, plans[f].train, plans[f].test, options);
            report.config["fold"] = std::to_string(f);
            out.folds.push_back(std::move(report));
        } catch (const Error& e) {
            throw Error(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
        }
    }
    out.mean = mean_report(out.folds);
    return out;
}

}  // namespace bonmf
