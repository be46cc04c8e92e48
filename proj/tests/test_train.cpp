#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bonmf/synthetic.hpp"
#include "bonmf/train.hpp"

using namespace bonmf;

namespace {

std::vector<std::size_t> all_records(const InteractionSet& data) {
    std::vector<std::size_t> out(data.size());
    std::iota(out.begin(), out.end(), 0);
    return out;
}

// Dense grid with ratings from a planted latent product, no noise. Factors are
// small enough that clamping to the rating range almost never binds.
InteractionSet planted_dense(std::size_t users, std::size_t items, std::size_t latent, std::uint64_t seed) {
    Rng rng(seed);
    const DenseMatrix p = gaussian_init(users, latent, 0.8 / std::sqrt(double(latent)), rng);
    const DenseMatrix q = gaussian_init(items, latent, 0.8 / std::sqrt(double(latent)), rng);
    InteractionSet data;
    for (std::size_t u = 0; u < users; ++u)
        for (std::size_t i = 0; i < items; ++i)
            data.add({"u" + std::to_string(u), "i" + std::to_string(i), std::clamp(3.0 + dot(p.row(u), q.row(i)), 1.0, 5.0), {}});
    return data;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersAlone) {
    std::vector<double> w{1.0, -2.0, 0.5};
    const auto before = w;
    const std::vector<double> g(3, 0.0);
    std::vector<std::span<double>> params{w};
    std::vector<std::span<const double>> grads{g};
    AdamState state(params);
    for (int t = 0; t < 5; ++t) adam_step(params, grads, state, {});
    EXPECT_EQ(w, before);
    EXPECT_EQ(state.step, 5u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    // Bias-corrected moments on step one are g and g^2, so the step is lr * g / (|g| + eps).
    std::vector<double> w{0.0, 0.0};
    const std::vector<double> g{3.0, -0.02};
    std::vector<std::span<double>> params{w};
    std::vector<std::span<const double>> grads{g};
    AdamState state(params);
    AdamParams hp;
    hp.learning_rate = 0.01;
    adam_step(params, grads, state, hp);
    EXPECT_NEAR(w[0], -0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
    EXPECT_NEAR(w[1], 0.01 * 0.02 / (0.02 + 1e-8), 1e-15);
}

TEST(Adam, BlockCountMismatch) {
    std::vector<double> w{0.0};
    std::vector<std::span<double>> params{w};
    AdamState state(params);
    EXPECT_THROW(adam_step(params, {}, state, {}), DimensionError);
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    c.epochs = 0;
    EXPECT_THROW(c.validate(), UsageError);
    c = {};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), UsageError);
    c = {};
    c.adam.learning_rate = -1;
    EXPECT_THROW(c.validate(), UsageError);
    c = {};
    c.adam.beta1 = 1.0;
    EXPECT_THROW(c.validate(), UsageError);
}

TEST(Fit, HistoryHasOneRecordPerEpoch) {
    const auto data = planted_dense(8, 8, 2, 1);
    Rng rng(1);
    BonmfModel model(nmd_config(4, {8}), data.n_users(), data.n_items(), rng);
    const FeatureIndex features(data, {});
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 16;
    int probes = 0;
    const auto history = fit(model, data, all_records(data), features, c, [&](const BonmfModel&) { return ++probes; });
    ASSERT_EQ(history.epochs.size(), 3u);
    EXPECT_EQ(probes, 3);
    EXPECT_EQ(history.epochs[2].heldout_mse, 3.0);
    for (const auto& e : history.epochs) EXPECT_TRUE(std::isfinite(e.train_loss));
}

TEST(Fit, DeterministicTrajectory) {
    const auto data = planted_dense(10, 10, 2, 2);
    const FeatureIndex features(data, {});
    TrainConfig c;
    c.epochs = 4;
    c.batch_size = 7;
    auto run = [&] {
        Rng rng(9);
        BonmfModel model(nmd_config(3, {6, 4}), data.n_users(), data.n_items(), rng);
        const auto h = fit(model, data, all_records(data), features, c);
        std::vector<double> losses;
        for (const auto& e : h.epochs) losses.push_back(e.train_loss);
        return std::pair{model, losses};
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
}

TEST(Fit, IdsOnlyLearnsPlantedFactors) {
    SyntheticSpec spec;
    spec.n_users = 50;
    spec.n_items = 50;
    spec.latent_dim = 4;
    spec.density = 1.0;
    spec.noise_sigma = 0.0;
    const auto data = generate_synthetic(spec).interactions;
    Rng rng(5);
    BonmfModel model(nmd_config(8, {32, 16}), data.n_users(), data.n_items(), rng);
    TrainConfig c;
    c.batch_size = 16;
    c.adam.learning_rate = 3e-3;
    const auto history = fit(model, data, all_records(data), FeatureIndex(data, {}), c);
    ASSERT_EQ(history.epochs.size(), 10u);
    EXPECT_LT(history.epochs.back().train_loss, 0.05);
    EXPECT_LT(history.epochs.back().train_loss, history.epochs.front().train_loss);
}

TEST(Fit, OutputBiasStartsAtTrainingMean) {
    InteractionSet data;
    data.add({"a", "x", 2.0, {}});
    data.add({"b", "y", 4.0, {}});
    Rng rng(1);
    BonmfModel model(nmd_config(2, {3}), 2, 2, rng);
    TrainConfig c;
    c.epochs = 1;
    c.adam.learning_rate = 1e-12;
    fit(model, data, all_records(data), FeatureIndex(data, {}), c);
    EXPECT_NEAR(model.layers().back().bias[0], 3.0, 1e-9);
}

TEST(Fit, MissingFeatureFailsBeforeAnyUpdate) {
    InteractionSet data;
    data.add({"a", "x", 2.0, {}});
    data.add({"b", "y", 4.0, {}});
    FeatureStore text(Modality::item_text, 2);
    text.insert("x", DenseVector{1, 1});
    ModelConfig config = nmd_config(2, {3});
    config.mask.use_item_text = true;
    config.item_text_dim = 2;
    Rng rng(1);
    BonmfModel model(config, 2, 2, rng);
    const BonmfModel before = model;
    try {
        fit(model, data, all_records(data), FeatureIndex(data, {nullptr, &text, nullptr}), TrainConfig{});
        FAIL();
    } catch (const MissingFeature& e) {
        EXPECT_EQ(e.modality(), "item_text");
        EXPECT_EQ(e.entity(), "y");
    }
    EXPECT_EQ(model, before);
}

TEST(Fit, UnseenEntitiesMarkedUnknown) {
    InteractionSet data;
    data.add({"a", "x", 2.0, {}});
    data.add({"b", "y", 4.0, {}});
    Rng rng(1);
    BonmfModel model(nmd_config(2, {3}), 2, 2, rng);
    TrainConfig c;
    c.epochs = 1;
    const std::vector<std::size_t> train{0};
    fit(model, data, train, FeatureIndex(data, {}), c);
    EXPECT_TRUE(model.user_is_known(0));
    EXPECT_FALSE(model.user_is_known(1));
    EXPECT_FALSE(model.item_is_known(1));
}

TEST(Fit, DivergenceRaisesNumericError) {
    const auto data = planted_dense(6, 6, 2, 4);
    Rng rng(1);
    BonmfModel model(nmd_config(2, {4}), 6, 6, rng);
    for (auto& b : model.parameter_blocks())
        for (double& v : b) v *= 1e200;
    TrainConfig c;
    c.epochs = 2;
    c.init_output_bias_to_mean = false;
    EXPECT_THROW(fit(model, data, all_records(data), FeatureIndex(data, {}), c), NumericError);
}

TEST(CrossValidate, FiveFoldsAndMean) {
    const auto data = planted_dense(12, 12, 2, 6);
    const FeatureIndex features(data, {});
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 32;
    const ModelFactory factory = [](std::size_t nu, std::size_t ni) {
        Rng rng(1);
        return BonmfModel(nmd_config(3, {4}), nu, ni, rng);
    };
    EvalOptions options;
    options.relevance_threshold = 3.0;
    const auto cv = cross_validate(factory, data, features, 5, 7, c, options);
    ASSERT_EQ(cv.folds.size(), 5u);
    double mse = 0, prec = 0, ndcg = 0;
    std::size_t n = 0;
    for (const auto& f : cv.folds) {
        mse += f.mse / 5;
        prec += f.precision_at_k / 5;
        ndcg += f.ndcg_at_k / 5;
        n += f.n_test_records;
    }
    EXPECT_NEAR(cv.mean.mse, mse, 1e-12);
    EXPECT_NEAR(cv.mean.precision_at_k, prec, 1e-12);
    EXPECT_NEAR(cv.mean.ndcg_at_k, ndcg, 1e-12);
    EXPECT_EQ(n, data.size());

    const auto again = cross_validate(factory, data, features, 5, 7, c, options);
    EXPECT_EQ(again.mean.mse, cv.mean.mse);
}

TEST(CrossValidate, ErrorsNameTheFold) {
    const auto data = planted_dense(4, 4, 1, 1);
    const ModelFactory bad = [](std::size_t, std::size_t) -> BonmfModel { throw NumericError("boom"); };
    try {
        cross_validate(bad, data, FeatureIndex(data, {}), 2, 1, TrainConfig{}, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric);
        EXPECT_NE(std::string(e.what()).find("fold 0"), std::string::npos);
    }
}
