#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bonmf/data.hpp"
#include "bonmf/error.hpp"
#include "bonmf/numerics.hpp"
#include "bonmf/rng.hpp"

namespace bonmf {

/// Index value meaning "entity not in the model's vocabulary".
inline constexpr std::size_t kUnknownEntity = std::numeric_limits<std::size_t>::max();

struct ModalityMask {
    bool use_item_text = true;
    bool use_item_image = true;
    bool use_user_profile = true;
    bool use_id_embeddings = true;

    bool any() const noexcept { return use_item_text || use_item_image || use_user_profile || use_id_embeddings; }
    std::uint8_t bits() const noexcept {
        return static_cast<std::uint8_t>(use_item_text | (use_item_image << 1) | (use_user_profile << 2) |
                                         (use_id_embeddings << 3));
    }
    static ModalityMask from_bits(std::uint8_t b) noexcept {
        return {(b & 1) != 0, (b & 2) != 0, (b & 4) != 0, (b & 8) != 0};
    }
    bool uses(Modality m) const noexcept {
        switch (m) {
            case Modality::item_text: return use_item_text;
            case Modality::item_image: return use_item_image;
            case Modality::user_profile: return use_user_profile;
        }
        return false;
    }

    bool operator==(const ModalityMask&) const = default;
};

struct ModelConfig {
    std::size_t id_embedding_dim = 50;
    std::vector<std::size_t> hidden_dims{128, 64};
    std::size_t user_profile_dim = 769;
    std::size_t item_text_dim = 769;
    std::size_t item_image_dim = 768;
    ModalityMask mask;
    double rating_min = kRatingMin;
    double rating_max = kRatingMax;

    std::size_t dim_of(Modality m) const noexcept {
        switch (m) {
            case Modality::item_text: return item_text_dim;
            case Modality::item_image: return item_image_dim;
            case Modality::user_profile: return user_profile_dim;
        }
        return 0;
    }

    void validate() const {
        if (hidden_dims.empty()) throw UsageError("model config: hidden_dims must be non-empty");
        if (std::find(hidden_dims.begin(), hidden_dims.end(), std::size_t{0}) != hidden_dims.end())
            throw UsageError("model config: hidden layer widths must be >= 1");
        if (!mask.any()) throw UsageError("model config: at least one modality must be enabled");
        if (mask.use_id_embeddings && id_embedding_dim == 0) throw UsageError("model config: id_embedding_dim must be >= 1");
        for (auto m : {Modality::user_profile, Modality::item_text, Modality::item_image})
            if (mask.uses(m) && dim_of(m) == 0)
                throw UsageError(std::string("model config: ") + to_string(m) + " dim must be >= 1");
        if (!(rating_min < rating_max)) throw UsageError("model config: rating_min must be < rating_max");
    }

    bool operator==(const ModelConfig&) const = default;
};

/// Width of the fused input: enabled content dims plus both ID embeddings.
inline std::size_t fusion_width(const ModelConfig& config) {
    std::size_t width = 0;
    if (config.mask.use_user_profile) width += config.user_profile_dim;
    if (config.mask.use_item_text) width += config.item_text_dim;
    if (config.mask.use_item_image) width += config.item_image_dim;
    if (config.mask.use_id_embeddings) width += 2 * config.id_embedding_dim;
    return width;
}

/// ID embeddings only; the neural matrix decomposition baseline.
inline ModelConfig nmd_config(std::size_t id_embedding_dim = 50, std::vector<std::size_t> hidden_dims = {128, 64}) {
    ModelConfig config;
    config.id_embedding_dim = id_embedding_dim;
    config.hidden_dims = std::move(hidden_dims);
    config.mask = {false, false, false, true};
    return config;
}

/// The base config with one content modality switched off.
inline ModelConfig without_modality(ModelConfig config, Modality removed) {
    switch (removed) {
        case Modality::item_text: config.mask.use_item_text = false; break;
        case Modality::item_image: config.mask.use_item_image = false; break;
        case Modality::user_profile: config.mask.use_user_profile = false; break;
    }
    return config;
}

struct DenseLayer {
    DenseMatrix weights;
    DenseVector bias;

    bool operator==(const DenseLayer&) const = default;
};

/// Content vectors for one (user, item) pair; an empty span means absent.
/// The ids are used only in error messages.
struct FeatureInputs {
    std::span<const double> user_profile;
    std::span<const double> item_text;
    std::span<const double> item_image;
    std::string_view user_id;
    std::string_view item_id;
};

struct ForwardCache {
    std::vector<DenseVector> layer_inputs;     // input to each layer; [0] is fused
    std::vector<DenseVector> pre_activations;  // affine output of each layer
    std::size_t user_idx = kUnknownEntity;     // kUnknownEntity when a zero row was used
    std::size_t item_idx = kUnknownEntity;
    std::uint64_t model_version = 0;

    const DenseVector& fused() const { return layer_inputs.front(); }
};

/// Layer gradients are dense; embedding gradients are kept per touched row.
struct GradientSet {
    std::vector<DenseLayer> layers;
    std::map<std::size_t, DenseVector> user_rows;
    std::map<std::size_t, DenseVector> item_rows;

    void clear() {
        for (auto& layer : layers) {
            std::fill(layer.weights.span().begin(), layer.weights.span().end(), 0.0);
            std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
        }
        user_rows.clear();
        item_rows.clear();
    }
};

class BonmfModel {
public:
    BonmfModel() = default;

    /// Xavier-uniform layer weights, zero biases, N(0, 0.01) embedding rows.
    BonmfModel(ModelConfig config, std::size_t n_users, std::size_t n_items, Rng& rng)
        : config_(std::move(config)) {
        config_.validate();
        const std::size_t id_dim = config_.mask.use_id_embeddings ? config_.id_embedding_dim : 0;
        user_table_ = gaussian_init(n_users, id_dim, 0.01, rng);
        item_table_ = gaussian_init(n_items, id_dim, 0.01, rng);
        user_known_.assign(n_users, 1);
        item_known_.assign(n_items, 1);
        std::size_t width = fusion_width(config_);
        std::vector<std::size_t> outs = config_.hidden_dims;
        outs.push_back(1);
        for (auto out : outs) {
            layers_.push_back({xavier_init(out, width, rng), DenseVector(out)});
            width = out;
        }
    }

    BonmfModel(ModelConfig config, DenseMatrix user_table, DenseMatrix item_table, std::vector<std::uint8_t> user_known,
               std::vector<std::uint8_t> item_known, std::vector<DenseLayer> layers)
        : config_(std::move(config)),
          user_table_(std::move(user_table)),
          item_table_(std::move(item_table)),
          user_known_(std::move(user_known)),
          item_known_(std::move(item_known)),
          layers_(std::move(layers)) {
        config_.validate();
        check_shapes();
    }

    const ModelConfig& config() const noexcept { return config_; }
    std::size_t n_users() const noexcept { return user_table_.rows(); }
    std::size_t n_items() const noexcept { return item_table_.rows(); }
    const DenseMatrix& user_table() const noexcept { return user_table_; }
    const DenseMatrix& item_table() const noexcept { return item_table_; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    const std::vector<std::uint8_t>& user_known() const noexcept { return user_known_; }
    const std::vector<std::uint8_t>& item_known() const noexcept { return item_known_; }
    std::uint64_t version() const noexcept { return version_; }

    bool user_is_known(std::size_t u) const noexcept { return u < user_known_.size() && user_known_[u]; }
    bool item_is_known(std::size_t i) const noexcept { return i < item_known_.size() && item_known_[i]; }

    /// Entities flagged unknown are served a zero embedding row.
    void set_known(std::vector<std::uint8_t> users, std::vector<std::uint8_t> items) {
        if (users.size() != n_users()) throw DimensionError("known-user flags", n_users(), users.size());
        if (items.size() != n_items()) throw DimensionError("known-item flags", n_items(), items.size());
        user_known_ = std::move(users);
        item_known_ = std::move(items);
        ++version_;
    }

    /// Mutable parameter arrays in a fixed order: each layer's weights then
    /// bias, then the user table, then the item table. Invalidates caches.
    std::vector<std::span<double>> parameter_blocks() {
        ++version_;
        std::vector<std::span<double>> blocks;
        for (auto& layer : layers_) {
            blocks.push_back(layer.weights.span());
            blocks.push_back(layer.bias.span());
        }
        blocks.push_back(user_table_.span());
        blocks.push_back(item_table_.span());
        return blocks;
    }

    std::vector<std::span<const double>> parameter_blocks() const {
        std::vector<std::span<const double>> blocks;
        for (const auto& layer : layers_) {
            blocks.push_back(layer.weights.span());
            blocks.push_back(layer.bias.span());
        }
        blocks.push_back(user_table_.span());
        blocks.push_back(item_table_.span());
        return blocks;
    }

    /// Concatenates [user_profile, item_text, item_image, user row, item row],
    /// skipping disabled blocks.
    DenseVector fuse(std::size_t user_idx, std::size_t item_idx, const FeatureInputs& features) const {
        DenseVector fused(fusion_width(config_));
        std::size_t offset = 0;
        auto put = [&](std::span<const double> block) {
            std::copy(block.begin(), block.end(), fused.begin() + static_cast<std::ptrdiff_t>(offset));
            offset += block.size();
        };
        auto content = [&](Modality m, std::span<const double> block, std::string_view entity) {
            if (!config_.mask.uses(m)) return;
            if (block.empty()) throw MissingFeature(to_string(m), std::string(entity));
            if (block.size() != config_.dim_of(m))
                throw DimensionError(std::string(to_string(m)) + " for '" + std::string(entity) + "'", config_.dim_of(m),
                                     block.size());
            put(block);
        };
        content(Modality::user_profile, features.user_profile, features.user_id);
        content(Modality::item_text, features.item_text, features.item_id);
        content(Modality::item_image, features.item_image, features.item_id);
        if (config_.mask.use_id_embeddings) {
            if (user_is_known(user_idx)) put(user_table_.row(user_idx));
            else offset += config_.id_embedding_dim;
            if (item_is_known(item_idx)) put(item_table_.row(item_idx));
            else offset += config_.id_embedding_dim;
        }
        return fused;
    }

    /// Affine+ReLU through the hidden layers, linear output; unclipped.
    double forward(const DenseVector& fused, ForwardCache& cache) const {
        if (fused.size() != fusion_width(config_)) throw DimensionError("forward: fused input", fusion_width(config_), fused.size());
        cache.layer_inputs.resize(layers_.size());
        cache.pre_activations.resize(layers_.size());
        cache.layer_inputs[0] = fused;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            cache.pre_activations[l] = affine_forward(cache.layer_inputs[l].span(), layers_[l].weights, layers_[l].bias.span());
            if (l + 1 < layers_.size()) cache.layer_inputs[l + 1] = relu(cache.pre_activations[l].span());
        }
        cache.model_version = version_;
        return cache.pre_activations.back()[0];
    }

    double forward(std::size_t user_idx, std::size_t item_idx, const FeatureInputs& features, ForwardCache& cache) const {
        const double prediction = forward(fuse(user_idx, item_idx, features), cache);
        cache.user_idx = config_.mask.use_id_embeddings && user_is_known(user_idx) ? user_idx : kUnknownEntity;
        cache.item_idx = config_.mask.use_id_embeddings && item_is_known(item_idx) ? item_idx : kUnknownEntity;
        return prediction;
    }

    double predict(std::size_t user_idx, std::size_t item_idx, const FeatureInputs& features) const {
        ForwardCache cache;
        return forward(fuse(user_idx, item_idx, features), cache);
    }

    double predict_clipped(std::size_t user_idx, std::size_t item_idx, const FeatureInputs& features) const {
        return std::clamp(predict(user_idx, item_idx, features), config_.rating_min, config_.rating_max);
    }

    GradientSet make_gradient_set() const {
        GradientSet grads;
        for (const auto& layer : layers_)
            grads.layers.push_back({DenseMatrix(layer.weights.rows(), layer.weights.cols()), DenseVector(layer.bias.size())});
        return grads;
    }

    /// Adds d(loss)/d(parameters) for one example into grads. Only the two
    /// embedding rows recorded in the cache receive gradient; content inputs
    /// are frozen.
    void backward(const ForwardCache& cache, double dloss_dpred, GradientSet& grads) const {
        if (cache.model_version != version_) throw UsageError("backward: cache is stale (model changed since forward)");
        if (cache.layer_inputs.size() != layers_.size()) throw UsageError("backward: cache does not match model");
        if (grads.layers.size() != layers_.size()) throw UsageError("backward: gradient set does not match model");

        std::vector<double> upstream{dloss_dpred};
        std::vector<double> downstream;
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const auto& layer = layers_[l];
            const bool first = l == 0;
            const bool need_input_grad = !first || needs_fused_gradient(cache);
            downstream.assign(need_input_grad ? layer.weights.cols() : 0, 0.0);
            affine_backward_into(upstream, cache.layer_inputs[l].span(), layer.weights, downstream,
                                 grads.layers[l].weights, grads.layers[l].bias.span());
            if (first) break;
            const auto& pre = cache.pre_activations[l - 1];
            for (std::size_t j = 0; j < downstream.size(); ++j)
                if (!(pre[j] > 0.0)) downstream[j] = 0.0;
            upstream.swap(downstream);
        }
        if (!needs_fused_gradient(cache)) return;

        const std::size_t id_dim = config_.id_embedding_dim;
        const std::size_t user_offset = fusion_width(config_) - 2 * id_dim;
        auto accumulate = [&](std::map<std::size_t, DenseVector>& rows, std::size_t idx, std::size_t offset) {
            auto [it, inserted] = rows.try_emplace(idx, id_dim);
            for (std::size_t k = 0; k < id_dim; ++k) it->second[k] += downstream[offset + k];
        };
        if (cache.user_idx != kUnknownEntity) accumulate(grads.user_rows, cache.user_idx, user_offset);
        if (cache.item_idx != kUnknownEntity) accumulate(grads.item_rows, cache.item_idx, user_offset + id_dim);
    }

    GradientSet backward(const ForwardCache& cache, double dloss_dpred) const {
        GradientSet grads = make_gradient_set();
        backward(cache, dloss_dpred, grads);
        return grads;
    }

    bool operator==(const BonmfModel& other) const {
        return config_ == other.config_ && user_table_ == other.user_table_ && item_table_ == other.item_table_ &&
               user_known_ == other.user_known_ && item_known_ == other.item_known_ && layers_ == other.layers_;
    }

private:
    bool needs_fused_gradient(const ForwardCache& cache) const noexcept {
        return cache.user_idx != kUnknownEntity || cache.item_idx != kUnknownEntity;
    }

    void check_shapes() const {
        const std::size_t id_dim = config_.mask.use_id_embeddings ? config_.id_embedding_dim : 0;
        if (user_table_.cols() != id_dim) throw DimensionError("user table width", id_dim, user_table_.cols());
        if (item_table_.cols() != id_dim) throw DimensionError("item table width", id_dim, item_table_.cols());
        if (user_known_.size() != user_table_.rows()) throw DimensionError("known-user flags", user_table_.rows(), user_known_.size());
        if (item_known_.size() != item_table_.rows()) throw DimensionError("known-item flags", item_table_.rows(), item_known_.size());
        if (layers_.size() != config_.hidden_dims.size() + 1)
            throw DimensionError("layer count", config_.hidden_dims.size() + 1, layers_.size());
        std::size_t width = fusion_width(config_);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const std::size_t out = l < config_.hidden_dims.size() ? config_.hidden_dims[l] : 1;
            const auto& layer = layers_[l];
            if (layer.weights.cols() != width) throw DimensionError("layer " + std::to_string(l) + " input width", width, layer.weights.cols());
            if (layer.weights.rows() != out) throw DimensionError("layer " + std::to_string(l) + " output width", out, layer.weights.rows());
            if (layer.bias.size() != out) throw DimensionError("layer " + std::to_string(l) + " bias", out, layer.bias.size());
            width = out;
        }
    }

    ModelConfig config_;
    DenseMatrix user_table_;
    DenseMatrix item_table_;
    std::vector<std::uint8_t> user_known_;
    std::vector<std::uint8_t> item_known_;
    std::vector<DenseLayer> layers_;
    std::uint64_t version_ = 0;
};

struct LossTerm {
    double loss;
    double dloss_dpred;
};

/// Per-example squared error; the trainer applies the 1/n average.
inline LossTerm mse_loss(double prediction, double target) noexcept {
    const double diff = prediction - target;
    return {diff * diff, 2.0 * diff};
}

// ---------------------------------------------------------------------------
// Binding feature stores to an interaction set's index space

struct FeatureSet {
    const FeatureStore* user_profile = nullptr;
    const FeatureStore* item_text = nullptr;
    const FeatureStore* item_image = nullptr;

    const FeatureStore* get(Modality m) const noexcept {
        switch (m) {
            case Modality::item_text: return item_text;
            case Modality::item_image: return item_image;
            case Modality::user_profile: return user_profile;
        }
        return nullptr;
    }
};

/// Checks that every enabled modality has a store of the configured width.
inline void check_feature_dims(const ModelConfig& config, const FeatureSet& features) {
    for (auto m : {Modality::user_profile, Modality::item_text, Modality::item_image}) {
        if (!config.mask.uses(m)) continue;
        const FeatureStore* store = features.get(m);
        if (!store) throw DataError(std::string("no ") + to_string(m) + " feature file supplied for an enabled modality");
        if (store->dim() != config.dim_of(m))
            throw DimensionError(std::string(to_string(m)) + " feature file vs model config", config.dim_of(m), store->dim());
    }
}

/// Per-index lookup of content vectors for the users and items of one
/// interaction set. Missing vectors resolve to empty spans.
class FeatureIndex {
public:
    FeatureIndex(const InteractionSet& data, const FeatureSet& features) : data_(&data) {
        auto resolve = [](const FeatureStore* store, const std::vector<std::string>& ids) {
            std::vector<const DenseVector*> out(ids.size(), nullptr);
            if (store)
                for (std::size_t k = 0; k < ids.size(); ++k) out[k] = store->find(ids[k]);
            return out;
        };
        user_profile_ = resolve(features.user_profile, data.user_ids());
        item_text_ = resolve(features.item_text, data.item_ids());
        item_image_ = resolve(features.item_image, data.item_ids());
    }

    FeatureInputs inputs(std::size_t user_idx, std::size_t item_idx) const {
        FeatureInputs in;
        in.user_profile = span_of(user_profile_[user_idx]);
        in.item_text = span_of(item_text_[item_idx]);
        in.item_image = span_of(item_image_[item_idx]);
        in.user_id = data_->user_ids()[user_idx];
        in.item_id = data_->item_ids()[item_idx];
        return in;
    }

    FeatureInputs inputs_for_record(std::size_t r) const { return inputs(data_->user_of(r), data_->item_of(r)); }

    /// Entities among the given records lacking a vector for an enabled
    /// modality, as "<modality>:<entity>" strings in record order.
    std::vector<std::string> missing(const ModalityMask& mask, std::span<const std::size_t> records) const {
        std::vector<std::string> out;
        std::set<std::string> seen;
        auto note = [&](Modality m, const std::string& id) {
            std::string key = std::string(to_string(m)) + ":" + id;
            if (seen.insert(key).second) out.push_back(std::move(key));
        };
        for (auto r : records) {
            const auto u = data_->user_of(r);
            const auto i = data_->item_of(r);
            if (mask.use_user_profile && !user_profile_[u]) note(Modality::user_profile, data_->user_ids()[u]);
            if (mask.use_item_text && !item_text_[i]) note(Modality::item_text, data_->item_ids()[i]);
            if (mask.use_item_image && !item_image_[i]) note(Modality::item_image, data_->item_ids()[i]);
        }
        return out;
    }

private:
    static std::span<const double> span_of(const DenseVector* v) {
        return v ? v->span() : std::span<const double>{};
    }

    const InteractionSet* data_;
    std::vector<const DenseVector*> user_profile_;
    std::vector<const DenseVector*> item_text_;
    std::vector<const DenseVector*> item_image_;
};

}  // namespace bonmf
