#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bonmf/baselines.hpp"
#include "bonmf/checkpoint.hpp"
#include "bonmf/data.hpp"
#include "bonmf/eval.hpp"
#include "bonmf/experiment.hpp"
#include "bonmf/model.hpp"
#include "bonmf/synthetic.hpp"
#include "bonmf/train.hpp"

namespace bonmf::cli {

// Exit codes: 0 success, 1 usage, 2 data/format, 3 numeric failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

inline constexpr std::uint64_t kDefaultSeed = 7;

/// Collects output files in memory and publishes them all at once through
/// temp-file + rename, so a failing command leaves nothing behind.
class OutputBatch {
public:
    void add(std::filesystem::path path, std::string contents) { files_.emplace_back(std::move(path), std::move(contents)); }

    void commit() {
        std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged;
        try {
            for (const auto& [path, contents] : files_) {
                if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
                auto tmp = path;
                tmp += ".tmp";
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                if (!out) throw DataError("cannot write " + path.string());
                out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
                out.close();
                if (!out) throw DataError("write failed for " + path.string());
                staged.emplace_back(tmp, path);
            }
            for (const auto& [tmp, path] : staged) std::filesystem::rename(tmp, path);
        } catch (const std::filesystem::filesystem_error& e) {
            for (const auto& [tmp, path] : staged) std::filesystem::remove(tmp);
            throw DataError(std::string("cannot write output: ") + e.what());
        } catch (...) {
            std::error_code ec;
            for (const auto& [tmp, path] : staged) std::filesystem::remove(tmp, ec);
            throw;
        }
    }

private:
    std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

inline RatingFormat guess_rating_format(const std::string& path, const std::string& flag) {
    if (flag == "csv") return RatingFormat::csv;
    if (flag == "movielens_dat" || flag == "dat") return RatingFormat::movielens_dat;
    if (!flag.empty()) throw UsageError("--ratings-format must be csv or movielens_dat");
    return std::filesystem::path(path).extension() == ".dat" ? RatingFormat::movielens_dat : RatingFormat::csv;
}

inline std::string feature_file_bytes(const FeatureStore& store, bool binary) {
    std::ostringstream out;
    if (binary) write_feature_binary(out, store);
    else write_feature_text(out, store);
    return out.str();
}

inline nlohmann::ordered_json matrix_json(const DenseMatrix& m) {
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return rows;
}

struct DataFlags {
    std::string ratings;
    std::string ratings_format;
    std::string user_profile;
    std::string item_text;
    std::string item_image;
    std::string split = "random";
    std::uint64_t split_seed = kDefaultSeed;
    double train_fraction = 0.7;
    double cold_fraction = 0.1;

    void add_to(CLI::App& app) {
        app.add_option("--ratings", ratings, "Ratings file (MovieLens .dat or CSV)")->required();
        app.add_option("--ratings-format", ratings_format, "csv | movielens_dat (default: by extension)");
        app.add_option("--user-profile", user_profile, "user_profile feature file (TSV or binary)");
        app.add_option("--item-text", item_text, "item_text feature file (TSV or binary)");
        app.add_option("--item-image", item_image, "item_image feature file (TSV or binary)");
        app.add_option("--split", split, "random | cold_item | none")
            ->check(CLI::IsMember({"random", "cold_item", "none"}))
            ->capture_default_str();
        app.add_option("--split-seed", split_seed, "Seed of the train/test split")->capture_default_str();
        app.add_option("--train-fraction", train_fraction, "Training share of (warm) records")->capture_default_str();
        app.add_option("--cold-fraction", cold_fraction, "Share of items held out cold (cold_item split)")
            ->capture_default_str();
    }

    Dataset load() const {
        Dataset ds;
        ds.interactions = load_ratings_file(ratings, guess_rating_format(ratings, ratings_format));
        if (!user_profile.empty()) ds.user_profile = load_feature_file(user_profile, Modality::user_profile);
        if (!item_text.empty()) ds.item_text = load_feature_file(item_text, Modality::item_text);
        if (!item_image.empty()) ds.item_image = load_feature_file(item_image, Modality::item_image);
        return ds;
    }

    SplitPlan plan(const InteractionSet& data) const {
        if (split == "random") return random_split(data, train_fraction, split_seed);
        if (split == "cold_item") return cold_item_split(data, cold_fraction, split_seed, train_fraction);
        if (data.empty()) throw DataError("no ratings");
        SplitPlan all;
        all.seed = split_seed;
        for (std::size_t r = 0; r < data.size(); ++r) all.test.push_back(r);
        all.train = all.test;
        return all;
    }
};

// ---------------------------------------------------------------------------

inline int cmd_synth(const SyntheticSpec& spec, const std::string& out_dir, bool binary, std::ostream& out) {
    const auto data = generate_synthetic(spec);
    const std::filesystem::path dir(out_dir);
    const char* ext = binary ? ".ftb" : ".tsv";

    OutputBatch batch;
    std::ostringstream ratings;
    write_ratings_csv(ratings, data.interactions);
    batch.add(dir / "ratings.csv", ratings.str());
    batch.add(dir / (std::string("item_text") + ext), feature_file_bytes(data.item_text, binary));
    batch.add(dir / (std::string("item_image") + ext), feature_file_bytes(data.item_image, binary));
    batch.add(dir / (std::string("user_profile") + ext), feature_file_bytes(data.user_profile, binary));

    nlohmann::ordered_json truth;
    truth["seed"] = spec.seed;
    truth["latent_dim"] = spec.latent_dim;
    truth["user_factors"] = matrix_json(data.truth.user_factors);
    truth["item_factors"] = matrix_json(data.truth.item_factors);
    truth["text_map"] = matrix_json(data.truth.text_map);
    truth["image_map"] = matrix_json(data.truth.image_map);
    truth["profile_map"] = matrix_json(data.truth.profile_map);
    batch.add(dir / "truth.json", truth.dump() + "\n");
    batch.commit();

    out << "synth: " << data.interactions.size() << " ratings, " << data.interactions.n_users() << " users, "
        << data.interactions.n_items() << " items -> " << dir.string() << "\n";
    return kExitOk;
}

struct TrainFlags {
    DataFlags data;
    std::string model = "bonmf";
    TrainConfig train;
    SvdConfig svd;
    std::size_t id_dim = 50;
    std::string hidden = "128,64";
    bool no_shuffle = false;
    std::string checkpoint;
    std::string history;
};

inline int cmd_train(const TrainFlags& flags, std::ostream& out) {
    const auto row = parse_row_key(flags.model);
    if (!row) throw UsageError("--model must be one of bonmf, nmd, svd, no_image, no_text, no_structured");

    const Dataset ds = flags.data.load();
    const SplitPlan plan = flags.data.plan(ds.interactions);
    const FeatureIndex index(ds.interactions, ds.features());

    Checkpoint ckpt;
    ckpt.user_ids = ds.interactions.user_ids();
    ckpt.item_ids = ds.interactions.item_ids();
    nlohmann::ordered_json history;
    history["model"] = row_key(*row);
    history["split"] = flags.data.split;
    history["split_seed"] = flags.data.split_seed;
    history["n_train"] = plan.train.size();
    history["epochs"] = nlohmann::ordered_json::array();
    double final_loss = 0.0;

    if (*row == RowKind::svd) {
        auto trained = svd_train(ds.interactions, plan.train, flags.svd);
        for (std::size_t e = 0; e < trained.epoch_train_mse.size(); ++e)
            history["epochs"].push_back({{"epoch", e + 1}, {"train_loss", trained.epoch_train_mse[e]}});
        final_loss = trained.epoch_train_mse.back();
        ckpt.model = std::move(trained.model);
    } else {
        ModelConfig base;
        base.id_embedding_dim = flags.id_dim;
        base.hidden_dims = detail::parse_count_list("--hidden", flags.hidden);
        if (ds.user_profile) base.user_profile_dim = ds.user_profile->dim();
        if (ds.item_text) base.item_text_dim = ds.item_text->dim();
        if (ds.item_image) base.item_image_dim = ds.item_image->dim();
        const ModelConfig mc = row_model_config(*row, base);
        mc.validate();
        check_feature_dims(mc, ds.features());

        TrainConfig tc = flags.train;
        tc.shuffle = !flags.no_shuffle;
        Rng init(tc.seed);
        BonmfModel model(mc, ds.interactions.n_users(), ds.interactions.n_items(), init);
        HeldoutProbe probe;
        if (flags.data.split != "none") {
            probe = [&](const BonmfModel& m) {
                double sum = 0.0;
                for (auto r : plan.test) {
                    const double d = m.predict_clipped(ds.interactions.user_of(r), ds.interactions.item_of(r),
                                                       index.inputs_for_record(r)) -
                                     ds.interactions.rating(r);
                    sum += d * d;
                }
                return sum / static_cast<double>(plan.test.size());
            };
        }
        const auto hist = fit(model, ds.interactions, plan.train, index, tc, probe);
        for (std::size_t e = 0; e < hist.epochs.size(); ++e) {
            nlohmann::ordered_json j{{"epoch", e + 1}, {"train_loss", hist.epochs[e].train_loss},
                                     {"seconds", hist.epochs[e].seconds}};
            if (hist.epochs[e].heldout_mse) j["heldout_mse"] = *hist.epochs[e].heldout_mse;
            history["epochs"].push_back(std::move(j));
        }
        final_loss = hist.epochs.back().train_loss;
        ckpt.model = std::move(model);
    }

    std::ostringstream bytes;
    save_checkpoint(bytes, ckpt);
    OutputBatch batch;
    batch.add(flags.checkpoint, bytes.str());
    batch.add(flags.history.empty() ? flags.checkpoint + ".history.json" : flags.history, history.dump(2) + "\n");
    batch.commit();
    out << "train: model=" << row_key(*row) << " records=" << plan.train.size()
        << " final_train_mse=" << detail::fixed4(final_loss) << " checkpoint=" << flags.checkpoint << "\n";
    return kExitOk;
}

struct EvaluateFlags {
    DataFlags data;
    std::string checkpoint;
    EvalOptions eval;
    std::string out;
    std::string name;
};

inline int cmd_evaluate(const EvaluateFlags& flags, std::ostream& out) {
    Checkpoint ckpt;
    {
        std::ifstream in(flags.checkpoint, std::ios::binary);
        if (!in) throw DataError("cannot open checkpoint " + flags.checkpoint);
        ckpt = load_checkpoint(in);
    }
    const Dataset ds = flags.data.load();
    const SplitPlan plan = flags.data.plan(ds.interactions);
    const FeatureIndex index(ds.interactions, ds.features());

    // Data indices -> checkpoint indices; ids the checkpoint never saw map to unknown.
    auto remap = [](const std::vector<std::string>& data_ids, const std::vector<std::string>& model_ids) {
        std::unordered_map<std::string, std::size_t> lookup;
        for (std::size_t k = 0; k < model_ids.size(); ++k) lookup.emplace(model_ids[k], k);
        std::vector<std::size_t> out(data_ids.size(), kUnknownEntity);
        for (std::size_t k = 0; k < data_ids.size(); ++k)
            if (auto it = lookup.find(data_ids[k]); it != lookup.end()) out[k] = it->second;
        return out;
    };
    const auto user_map = remap(ds.interactions.user_ids(), ckpt.user_ids);
    const auto item_map = remap(ds.interactions.item_ids(), ckpt.item_ids);

    std::string name = flags.name;
    EvalReport report;
    if (const auto* model = std::get_if<BonmfModel>(&ckpt.model)) {
        check_feature_dims(model->config(), ds.features());
        if (name.empty()) {
            const auto& m = model->config().mask;
            name = (!m.use_item_text && !m.use_item_image && !m.use_user_profile) ? "NMD" : "BoNMF";
        }
        report = evaluate(
            ds.interactions, plan.train, plan.test,
            [&](std::size_t u, std::size_t i) { return model->predict_clipped(user_map[u], item_map[i], index.inputs(u, i)); },
            flags.eval);
    } else {
        const auto& svd = std::get<SvdModel>(ckpt.model);
        if (name.empty()) name = "SVD";
        report = evaluate(
            ds.interactions, plan.train, plan.test,
            [&](std::size_t u, std::size_t i) { return svd_predict_clipped(svd, user_map[u], item_map[i]); }, flags.eval);
    }
    report.config["checkpoint"] = flags.checkpoint;
    report.config["split"] = flags.data.split;
    report.config["split_seed"] = std::to_string(flags.data.split_seed);
    report.config["split_fingerprint"] = hex64(plan.fingerprint());

    ComparisonTable table{{{name, report}}};
    const std::string text = serialize_table(table, TableFormat::text);
    OutputBatch batch;
    batch.add(flags.out + ".json", serialize_report(report));
    batch.add(flags.out + ".txt", text);
    batch.commit();
    out << text;
    return kExitOk;
}

struct AblateFlags {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
};

inline ExperimentConfig resolve_ablate_config(const AblateFlags& flags) {
    std::ifstream in(flags.config);
    if (!in) throw DataError("cannot open config file " + flags.config);
    ExperimentConfig cfg;
    auto entries = parse_config_entries(in);
    for (const auto& kv : flags.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || kv.find('.') > eq)
            throw UsageError("--set expects section.key=value, got '" + kv + "'");
        entries.emplace_back(std::string(detail::trim(kv.substr(0, eq))), std::string(detail::trim(kv.substr(eq + 1))));
    }
    apply_config_entries(cfg, entries, std::filesystem::path(flags.config).parent_path());
    if (flags.seed) {
        cfg.split.seed = *flags.seed;
        cfg.train.seed = *flags.seed;
        cfg.svd.seed = *flags.seed;
        if (auto* spec = std::get_if<SyntheticSpec>(&cfg.data)) spec->seed = *flags.seed;
    }
    if (!flags.out.empty()) cfg.output = flags.out;
    return cfg;
}

inline int cmd_ablate(const AblateFlags& flags, std::ostream& out) {
    const ExperimentConfig cfg = resolve_ablate_config(flags);
    cfg.validate();
    const Dataset ds = load_dataset(cfg);
    ExperimentResult result;
    if (cfg.cold_start) result = run_cold_start(cfg, ds);
    else result.overall = run_experiment(cfg, ds);

    const std::string text = serialize_table(result.overall, TableFormat::text);
    out << text;
    if (result.cold_only) out << "\nCold items only:\n" << serialize_table(*result.cold_only, TableFormat::text);
    if (!cfg.output.empty()) {
        const std::filesystem::path dir(cfg.output);
        OutputBatch batch;
        batch.add(dir / "table.txt", text);
        batch.add(dir / "table.json", serialize_table(result.overall, TableFormat::machine));
        if (result.cold_only) {
            batch.add(dir / "cold_table.txt", serialize_table(*result.cold_only, TableFormat::text));
            batch.add(dir / "cold_table.json", serialize_table(*result.cold_only, TableFormat::machine));
        }
        batch.commit();
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"bonmf: multimodal neural matrix factorization recommender", "bonmf"};
    app.require_subcommand(1);

    SyntheticSpec spec;
    spec.seed = kDefaultSeed;
    std::string synth_out;
    bool synth_binary = false;
    auto* synth = app.add_subcommand("synth", "Generate a planted-model dataset");
    synth->add_option("--users", spec.n_users, "Number of users")->capture_default_str();
    synth->add_option("--items", spec.n_items, "Number of items")->capture_default_str();
    synth->add_option("--latent", spec.latent_dim, "Planted latent dimension")->capture_default_str();
    synth->add_option("--density", spec.density, "Observation probability per pair")->capture_default_str();
    synth->add_option("--noise", spec.noise_sigma, "Rating noise standard deviation")->capture_default_str();
    synth->add_option("--text-dim", spec.text_dim, "item_text feature width")->capture_default_str();
    synth->add_option("--image-dim", spec.image_dim, "item_image feature width")->capture_default_str();
    synth->add_option("--profile-dim", spec.profile_dim, "user_profile feature width")->capture_default_str();
    synth->add_option("--content-signal", spec.content_signal, "Signal share of content features in [0,1]")
        ->capture_default_str();
    synth->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_flag("--binary", synth_binary, "Write binary (FTv1) feature files instead of TSV");

    TrainFlags tf;
    tf.train.seed = kDefaultSeed;
    tf.svd.seed = kDefaultSeed;
    auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
    tf.data.add_to(*train);
    train->add_option("--model", tf.model, "bonmf | nmd | svd | no_image | no_text | no_structured")->capture_default_str();
    train->add_option("--epochs", tf.train.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--batch-size", tf.train.batch_size, "Mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--lr", tf.train.adam.learning_rate, "Adam learning rate")->capture_default_str();
    train->add_option("--l2-embedding", tf.train.l2_embedding, "Embedding weight decay")->capture_default_str();
    train->add_option("--seed", tf.train.seed, "Initialization and shuffling seed")->capture_default_str();
    train->add_flag("--no-shuffle", tf.no_shuffle, "Keep record order fixed across epochs");
    train->add_option("--id-dim", tf.id_dim, "ID embedding width")->capture_default_str();
    train->add_option("--hidden", tf.hidden, "Hidden layer widths, comma separated")->capture_default_str();
    train->add_option("--svd-rank", tf.svd.rank, "SVD latent rank")->capture_default_str();
    train->add_option("--svd-epochs", tf.svd.epochs, "SVD epochs")->capture_default_str();
    train->add_option("--svd-lr", tf.svd.learning_rate, "SVD learning rate")->capture_default_str();
    train->add_option("--svd-reg", tf.svd.regularization, "SVD L2 regularization")->capture_default_str();
    train->add_option("--checkpoint", tf.checkpoint, "Checkpoint output path")->required();
    train->add_option("--history", tf.history, "History report path (default <checkpoint>.history.json)");

    EvaluateFlags ef;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a split");
    ef.data.add_to(*evaluate_cmd);
    evaluate_cmd->add_option("--checkpoint", ef.checkpoint, "Checkpoint to evaluate")->required();
    evaluate_cmd->add_option("--k", ef.eval.k, "Ranking cutoff K")->check(CLI::PositiveNumber)->capture_default_str();
    evaluate_cmd->add_option("--threshold", ef.eval.relevance_threshold, "Relevance threshold rating")
        ->capture_default_str();
    evaluate_cmd->add_flag("--full-catalog", ef.eval.full_catalog, "Rank all items without a training record");
    evaluate_cmd->add_option("--name", ef.name, "Row label in the report table");
    evaluate_cmd->add_option("--out", ef.out, "Output prefix (<out>.json and <out>.txt)")->required();

    AblateFlags af;
    auto* ablate = app.add_subcommand("ablate", "Run the model comparison / ablation experiment");
    ablate->add_option("--config", af.config, "Experiment config file (INI)")->required();
    ablate->add_option("--set", af.overrides, "Override a config entry: section.key=value (repeatable)");
    ablate->add_option("--seed", af.seed, "Override every seed (split, training, SVD, synthetic)");
    ablate->add_option("--out", af.out, "Output directory (overrides experiment.output)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(spec, synth_out, synth_binary, out);
        if (*train) return cmd_train(tf, out);
        if (*evaluate_cmd) return cmd_evaluate(ef, out);
        if (*ablate) return cmd_ablate(af, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace bonmf::cli
