#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "bonmf/data.hpp"
#include "bonmf/numerics.hpp"
#include "bonmf/rng.hpp"

namespace bonmf {

/// Planted low-rank rating model with linearly-derived content features.
struct SyntheticSpec {
    std::size_t n_users = 500;
    std::size_t n_items = 300;
    std::size_t latent_dim = 8;
    double density = 0.1;
    double noise_sigma = 0.1;
    std::size_t text_dim = 32;
    std::size_t image_dim = 4;
    std::size_t profile_dim = 16;
    double content_signal = 0.9;
    std::uint64_t seed = 7;

    void validate() const {
        if (n_users == 0 || n_items == 0 || latent_dim == 0 || text_dim == 0 || image_dim == 0 || profile_dim == 0)
            throw UsageError("synthetic spec: all counts must be >= 1");
        if (!(density > 0.0 && density <= 1.0)) throw UsageError("synthetic spec: density must be in (0,1]");
        if (!(noise_sigma >= 0.0)) throw UsageError("synthetic spec: noise_sigma must be >= 0");
        if (!(content_signal >= 0.0 && content_signal <= 1.0))
            throw UsageError("synthetic spec: content_signal must be in [0,1]");
        if (density * static_cast<double>(n_users) * static_cast<double>(n_items) < 1.0)
            throw UsageError("synthetic spec: density * n_users * n_items must be >= 1");
    }
};

/// Ground truth behind a synthetic dataset. Rows are indexed by the planted
/// entity number k of ids "u<k>" / "i<k>", which need not match the dense
/// indices of the interaction set.
struct PlantedTruth {
    DenseMatrix user_factors;  // n_users x latent
    DenseMatrix item_factors;  // n_items x latent
    DenseMatrix text_map;      // text_dim x latent
    DenseMatrix image_map;     // image_dim x latent
    DenseMatrix profile_map;   // profile_dim x latent
};

struct SyntheticData {
    InteractionSet interactions;
    FeatureStore item_text;
    FeatureStore item_image;
    FeatureStore user_profile;
    PlantedTruth truth;
};

inline std::string synthetic_user_id(std::size_t k) { return "u" + std::to_string(k); }
inline std::string synthetic_item_id(std::size_t k) { return "i" + std::to_string(k); }

namespace detail {

inline DenseVector mixed_features(const DenseMatrix& map, std::span<const double> latent, double signal, Rng& rng) {
    DenseVector out(map.rows());
    for (std::size_t r = 0; r < map.rows(); ++r) {
        const double clean = dot(map.row(r), latent);
        const double noise = rng.normal();
        out[r] = signal * clean + (1.0 - signal) * noise;
    }
    return out;
}

}  // namespace detail

/// rating = clip(3 + u.v + eps, 1, 5) for each independently observed pair;
/// features = signal * (map * latent) + (1 - signal) * N(0,1).
inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const double factor_std = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));

    SyntheticData out;
    auto& truth = out.truth;
    truth.user_factors = gaussian_init(spec.n_users, spec.latent_dim, factor_std, rng);
    truth.item_factors = gaussian_init(spec.n_items, spec.latent_dim, factor_std, rng);
    truth.text_map = gaussian_init(spec.text_dim, spec.latent_dim, factor_std, rng);
    truth.image_map = gaussian_init(spec.image_dim, spec.latent_dim, factor_std, rng);
    truth.profile_map = gaussian_init(spec.profile_dim, spec.latent_dim, factor_std, rng);

    for (std::size_t u = 0; u < spec.n_users; ++u) {
        for (std::size_t i = 0; i < spec.n_items; ++i) {
            if (!rng.bernoulli(spec.density)) continue;
            const double eps = rng.normal(0.0, spec.noise_sigma);
            const double raw = 3.0 + dot(truth.user_factors.row(u), truth.item_factors.row(i)) + eps;
            out.interactions.add({synthetic_user_id(u), synthetic_item_id(i), std::clamp(raw, kRatingMin, kRatingMax), {}});
        }
    }
    if (out.interactions.empty()) throw DataError("synthetic spec produced zero observed interactions");

    out.item_text = FeatureStore(Modality::item_text, spec.text_dim);
    out.item_image = FeatureStore(Modality::item_image, spec.image_dim);
    out.user_profile = FeatureStore(Modality::user_profile, spec.profile_dim);
    for (std::size_t i = 0; i < spec.n_items; ++i) {
        out.item_text.insert(synthetic_item_id(i),
                             detail::mixed_features(truth.text_map, truth.item_factors.row(i), spec.content_signal, rng));
        out.item_image.insert(synthetic_item_id(i),
                              detail::mixed_features(truth.image_map, truth.item_factors.row(i), spec.content_signal, rng));
    }
    for (std::size_t u = 0; u < spec.n_users; ++u)
        out.user_profile.insert(synthetic_user_id(u),
                                detail::mixed_features(truth.profile_map, truth.user_factors.row(u), spec.content_signal, rng));
    return out;
}

}  // namespace bonmf
