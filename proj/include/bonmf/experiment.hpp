#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"

#include "bonmf/baselines.hpp"
#include "bonmf/data.hpp"
#include "bonmf/eval.hpp"
#include "bonmf/model.hpp"
#include "bonmf/synthetic.hpp"
#include "bonmf/train.hpp"

namespace bonmf {

// ---------------------------------------------------------------------------
// Row set

enum class RowKind { bonmf, nmd, svd, no_image, no_text, no_structured };

inline constexpr RowKind kCanonicalRows[] = {RowKind::bonmf,    RowKind::nmd,     RowKind::svd,
                                             RowKind::no_image, RowKind::no_text, RowKind::no_structured};

inline const char* row_key(RowKind k) {
    switch (k) {
        case RowKind::bonmf: return "bonmf";
        case RowKind::nmd: return "nmd";
        case RowKind::svd: return "svd";
        case RowKind::no_image: return "no_image";
        case RowKind::no_text: return "no_text";
        case RowKind::no_structured: return "no_structured";
    }
    return "unknown";
}

inline const char* row_display_name(RowKind k) {
    switch (k) {
        case RowKind::bonmf: return "BoNMF";
        case RowKind::nmd: return "NMD";
        case RowKind::svd: return "SVD";
        case RowKind::no_image: return "BoNMF-no-image";
        case RowKind::no_text: return "BoNMF-no-text";
        case RowKind::no_structured: return "BoNMF-no-structured";
    }
    return "unknown";
}

inline std::optional<RowKind> parse_row_key(std::string_view s) {
    for (auto k : kCanonicalRows)
        if (s == row_key(k) || s == row_display_name(k)) return k;
    return std::nullopt;
}

/// Model config for a neural row given the full-model base config.
inline ModelConfig row_model_config(RowKind kind, const ModelConfig& base) {
    switch (kind) {
        case RowKind::bonmf: return base;
        case RowKind::nmd: {
            auto c = nmd_config(base.id_embedding_dim, base.hidden_dims);
            c.user_profile_dim = base.user_profile_dim;
            c.item_text_dim = base.item_text_dim;
            c.item_image_dim = base.item_image_dim;
            return c;
        }
        case RowKind::no_image: return without_modality(base, Modality::item_image);
        case RowKind::no_text: return without_modality(base, Modality::item_text);
        case RowKind::no_structured: return without_modality(base, Modality::user_profile);
        case RowKind::svd: break;
    }
    throw UsageError("row_model_config: SVD is not a neural row");
}

// ---------------------------------------------------------------------------
// Configuration

struct DataPaths {
    std::string ratings;
    RatingFormat ratings_format = RatingFormat::csv;
    std::string user_profile;  // empty = not supplied
    std::string item_text;
    std::string item_image;
};

struct SplitConfig {
    SplitKind kind = SplitKind::random;
    double train_fraction = 0.7;
    double cold_fraction = 0.1;
    std::size_t folds = 5;
    std::uint64_t seed = 7;
};

struct ExperimentConfig {
    std::variant<SyntheticSpec, DataPaths> data = SyntheticSpec{};
    SplitConfig split;
    std::size_t id_embedding_dim = 50;
    std::vector<std::size_t> hidden_dims{128, 64};
    TrainConfig train;
    SvdConfig svd;
    EvalOptions eval;
    std::vector<RowKind> rows{std::begin(kCanonicalRows), std::end(kCanonicalRows)};
    bool cold_start = false;  // also emit the cold-only table (requires split kind cold_item)
    std::string output;       // output directory; empty = none

    void validate() const {
        if (rows.empty()) throw UsageError("experiment: at least one model row must be selected");
        if (const auto* spec = std::get_if<SyntheticSpec>(&data)) spec->validate();
        if (const auto* paths = std::get_if<DataPaths>(&data)) {
            if (paths->ratings.empty()) throw UsageError("experiment: data.ratings path is required");
            for (const auto* p : {&paths->ratings, &paths->user_profile, &paths->item_text, &paths->item_image})
                if (!p->empty() && !std::filesystem::exists(*p)) throw DataError("experiment: file not found: " + *p);
        }
        if (cold_start && split.kind != SplitKind::cold_item)
            throw UsageError("experiment: cold_start requires split.kind = cold_item");
        train.validate();
        svd.validate();
        eval.validate();
    }
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("config: " + key + ": expected boolean, got '" + v + "'");
}

inline double parse_real(const std::string& key, const std::string& v) {
    const auto d = parse_double(v);
    if (!d) throw UsageError("config: " + key + ": expected number, got '" + v + "'");
    return *d;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
    const auto n = parse_int(v);
    if (!n || *n < 0) throw UsageError("config: " + key + ": expected non-negative integer, got '" + v + "'");
    return static_cast<std::uint64_t>(*n);
}

inline std::vector<std::size_t> parse_count_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (auto part : split(v, ",")) out.push_back(parse_count(key, std::string(trim(part))));
    return out;
}

}  // namespace detail

/// Flat `section.key -> value` view of an INI document, in file order.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Parses INI text; syntax errors become UsageError with the line number.
inline ConfigEntries parse_config_entries(std::istream& in) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw UsageError("config syntax error at line " + std::to_string(e.line()) + ": " + e.message());
    }
    ConfigEntries out;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw UsageError("config: key '" + section + "' must be inside a [section]");
        for (const auto& [key, value] : body) out.emplace_back(section + "." + key, value.data());
    }
    return out;
}

/// Applies entries over cfg; unknown keys are rejected. Relative paths are
/// resolved against base_dir.
inline void apply_config_entries(ExperimentConfig& cfg, const ConfigEntries& entries,
                                 const std::filesystem::path& base_dir = {}) {
    using namespace detail;
    std::optional<std::string> source;
    SyntheticSpec synth = std::holds_alternative<SyntheticSpec>(cfg.data) ? std::get<SyntheticSpec>(cfg.data) : SyntheticSpec{};
    DataPaths paths = std::holds_alternative<DataPaths>(cfg.data) ? std::get<DataPaths>(cfg.data) : DataPaths{};
    auto resolve = [&](const std::string& p) {
        if (p.empty()) return p;
        const std::filesystem::path path(p);
        return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).string();
    };

    for (const auto& [key, value] : entries) {
        const std::string& v = value;
        if (key == "data.source") {
            if (v != "synthetic" && v != "files") throw UsageError("config: data.source must be synthetic or files");
            source = v;
        } else if (key == "data.ratings") paths.ratings = resolve(v);
        else if (key == "data.ratings_format") {
            if (v == "csv") paths.ratings_format = RatingFormat::csv;
            else if (v == "movielens_dat" || v == "dat") paths.ratings_format = RatingFormat::movielens_dat;
            else throw UsageError("config: data.ratings_format must be csv or movielens_dat");
        } else if (key == "data.user_profile") paths.user_profile = resolve(v);
        else if (key == "data.item_text") paths.item_text = resolve(v);
        else if (key == "data.item_image") paths.item_image = resolve(v);
        else if (key == "synthetic.users") synth.n_users = parse_count(key, v);
        else if (key == "synthetic.items") synth.n_items = parse_count(key, v);
        else if (key == "synthetic.latent") synth.latent_dim = parse_count(key, v);
        else if (key == "synthetic.density") synth.density = parse_real(key, v);
        else if (key == "synthetic.noise") synth.noise_sigma = parse_real(key, v);
        else if (key == "synthetic.text_dim") synth.text_dim = parse_count(key, v);
        else if (key == "synthetic.image_dim") synth.image_dim = parse_count(key, v);
        else if (key == "synthetic.profile_dim") synth.profile_dim = parse_count(key, v);
        else if (key == "synthetic.content_signal") synth.content_signal = parse_real(key, v);
        else if (key == "synthetic.seed") synth.seed = parse_count(key, v);
        else if (key == "split.kind") {
            if (v == "random") cfg.split.kind = SplitKind::random;
            else if (v == "cold_item") cfg.split.kind = SplitKind::cold_item;
            else if (v == "kfold") cfg.split.kind = SplitKind::kfold;
            else throw UsageError("config: split.kind must be random, cold_item or kfold");
        } else if (key == "split.train_fraction") cfg.split.train_fraction = parse_real(key, v);
        else if (key == "split.cold_fraction") cfg.split.cold_fraction = parse_real(key, v);
        else if (key == "split.folds") cfg.split.folds = parse_count(key, v);
        else if (key == "split.seed") cfg.split.seed = parse_count(key, v);
        else if (key == "model.id_embedding_dim") cfg.id_embedding_dim = parse_count(key, v);
        else if (key == "model.hidden") cfg.hidden_dims = parse_count_list(key, v);
        else if (key == "train.epochs") cfg.train.epochs = parse_count(key, v);
        else if (key == "train.batch_size") cfg.train.batch_size = parse_count(key, v);
        else if (key == "train.learning_rate") cfg.train.adam.learning_rate = parse_real(key, v);
        else if (key == "train.beta1") cfg.train.adam.beta1 = parse_real(key, v);
        else if (key == "train.beta2") cfg.train.adam.beta2 = parse_real(key, v);
        else if (key == "train.epsilon") cfg.train.adam.epsilon = parse_real(key, v);
        else if (key == "train.l2_embedding") cfg.train.l2_embedding = parse_real(key, v);
        else if (key == "train.seed") cfg.train.seed = parse_count(key, v);
        else if (key == "train.shuffle") cfg.train.shuffle = parse_bool(key, v);
        else if (key == "svd.rank") cfg.svd.rank = parse_count(key, v);
        else if (key == "svd.epochs") cfg.svd.epochs = parse_count(key, v);
        else if (key == "svd.learning_rate") cfg.svd.learning_rate = parse_real(key, v);
        else if (key == "svd.regularization") cfg.svd.regularization = parse_real(key, v);
        else if (key == "svd.seed") cfg.svd.seed = parse_count(key, v);
        else if (key == "eval.k") cfg.eval.k = parse_count(key, v);
        else if (key == "eval.relevance_threshold") cfg.eval.relevance_threshold = parse_real(key, v);
        else if (key == "eval.full_catalog") cfg.eval.full_catalog = parse_bool(key, v);
        else if (key == "experiment.rows") {
            cfg.rows.clear();
            for (auto part : split(v, ",")) {
                const auto row = parse_row_key(trim(part));
                if (!row) throw UsageError("config: unknown model row '" + std::string(trim(part)) + "'");
                if (std::find(cfg.rows.begin(), cfg.rows.end(), *row) == cfg.rows.end()) cfg.rows.push_back(*row);
            }
        } else if (key == "experiment.cold_start") cfg.cold_start = parse_bool(key, v);
        else if (key == "experiment.output") cfg.output = resolve(v);
        else throw UsageError("config: unknown key '" + key + "'");
    }

    if (source == "files") cfg.data = paths;
    else if (source == "synthetic") cfg.data = synth;
    else if (std::holds_alternative<SyntheticSpec>(cfg.data)) cfg.data = synth;
    else cfg.data = paths;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path.string());
    ExperimentConfig cfg;
    apply_config_entries(cfg, parse_config_entries(in), path.parent_path());
    return cfg;
}

// ---------------------------------------------------------------------------
// Comparison tables

struct TableRow {
    std::string model;
    EvalReport report;

    bool operator==(const TableRow&) const = default;
};

struct ComparisonTable {
    std::vector<TableRow> rows;

    bool operator==(const ComparisonTable&) const = default;
};

enum class TableFormat { text, machine };

namespace detail {

/// Fixed 4-decimal rendering (ties resolved by printf's round-half-even on the
/// binary value).
inline std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["mse"] = r.mse;
    j["precision_at_k"] = r.precision_at_k;
    j["ndcg_at_k"] = r.ndcg_at_k;
    j["k"] = r.k;
    j["n_test_records"] = r.n_test_records;
    j["n_users_scored"] = r.n_users_scored;
    j["n_users_skipped"] = r.n_users_skipped;
    j["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.config) j["config"][k] = v;
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.mse = j.at("mse").get<double>();
    r.precision_at_k = j.at("precision_at_k").get<double>();
    r.ndcg_at_k = j.at("ndcg_at_k").get<double>();
    r.k = j.at("k").get<std::size_t>();
    r.n_test_records = j.at("n_test_records").get<std::size_t>();
    r.n_users_scored = j.at("n_users_scored").get<std::size_t>();
    r.n_users_skipped = j.at("n_users_skipped").get<std::size_t>();
    if (j.contains("config"))
        for (const auto& [k, v] : j.at("config").items()) r.config[k] = v.get<std::string>();
    return r;
}

}  // namespace detail

/// Flat key/value JSON document with stable key order.
inline std::string serialize_report(const EvalReport& report) { return detail::report_to_json(report).dump(2) + "\n"; }

inline EvalReport parse_report(const std::string& text) {
    try {
        return detail::report_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("malformed report: ") + e.what());
    }
}

inline std::string serialize_table(const ComparisonTable& table, TableFormat format) {
    if (table.rows.empty()) throw UsageError("serialize_table: empty table");
    if (format == TableFormat::machine) {
        nlohmann::ordered_json doc;
        doc["format"] = "bonmf-table v1";
        doc["rows"] = nlohmann::ordered_json::array();
        for (const auto& row : table.rows) {
            nlohmann::ordered_json j;
            j["model"] = row.model;
            j["report"] = detail::report_to_json(row.report);
            doc["rows"].push_back(std::move(j));
        }
        return doc.dump(2) + "\n";
    }

    const std::vector<std::string> headers{"Model", "MSE", "Precision@K", "NDCG"};
    std::vector<std::vector<std::string>> cells;
    for (const auto& row : table.rows)
        cells.push_back({row.model, detail::fixed4(row.report.mse), detail::fixed4(row.report.precision_at_k),
                         detail::fixed4(row.report.ndcg_at_k)});
    std::vector<std::size_t> widths;
    for (std::size_t c = 0; c < headers.size(); ++c) {
        std::size_t w = headers[c].size();
        for (const auto& row : cells) w = std::max(w, row[c].size());
        widths.push_back(w);
    }
    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << " | ";
            out << row[c];
            if (c + 1 < row.size()) out << std::string(widths[c] - row[c].size(), ' ');
        }
        out << '\n';
    };
    emit(headers);
    for (std::size_t c = 0; c < widths.size(); ++c) {
        if (c) out << "-+-";
        out << std::string(widths[c], '-');
    }
    out << '\n';
    for (const auto& row : cells) emit(row);
    return out.str();
}

inline ComparisonTable parse_table(const std::string& machine_text) {
    try {
        const auto doc = nlohmann::json::parse(machine_text);
        if (doc.at("format").get<std::string>() != "bonmf-table v1") throw ParseError(0, "unsupported table format tag");
        ComparisonTable table;
        for (const auto& row : doc.at("rows"))
            table.rows.push_back({row.at("model").get<std::string>(), detail::report_from_json(row.at("report"))});
        return table;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("malformed table: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Running

/// Interactions plus whichever feature stores were supplied.
struct Dataset {
    InteractionSet interactions;
    std::optional<FeatureStore> user_profile;
    std::optional<FeatureStore> item_text;
    std::optional<FeatureStore> item_image;

    FeatureSet features() const {
        return {user_profile ? &*user_profile : nullptr, item_text ? &*item_text : nullptr,
                item_image ? &*item_image : nullptr};
    }
};

inline InteractionSet load_ratings_file(const std::string& path, RatingFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open ratings file " + path);
    try {
        return parse_ratings(in, format);
    } catch (const ParseError& e) {
        throw e.in_source(path);
    }
}

inline FeatureStore load_feature_file(const std::string& path, Modality modality) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature file " + path);
    try {
        return parse_feature_file(in, modality);
    } catch (const ParseError& e) {
        throw e.in_source(path);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

inline Dataset load_dataset(const ExperimentConfig& cfg) {
    Dataset ds;
    if (const auto* spec = std::get_if<SyntheticSpec>(&cfg.data)) {
        auto synth = generate_synthetic(*spec);
        ds.interactions = std::move(synth.interactions);
        ds.user_profile = std::move(synth.user_profile);
        ds.item_text = std::move(synth.item_text);
        ds.item_image = std::move(synth.item_image);
        return ds;
    }
    const auto& paths = std::get<DataPaths>(cfg.data);
    ds.interactions = load_ratings_file(paths.ratings, paths.ratings_format);
    if (!paths.user_profile.empty()) ds.user_profile = load_feature_file(paths.user_profile, Modality::user_profile);
    if (!paths.item_text.empty()) ds.item_text = load_feature_file(paths.item_text, Modality::item_text);
    if (!paths.item_image.empty()) ds.item_image = load_feature_file(paths.item_image, Modality::item_image);
    return ds;
}

/// Full-model config: every modality with a supplied feature store, sized
/// from the store.
inline ModelConfig base_model_config(const ExperimentConfig& cfg, const Dataset& ds) {
    ModelConfig c;
    c.id_embedding_dim = cfg.id_embedding_dim;
    c.hidden_dims = cfg.hidden_dims;
    c.mask.use_user_profile = ds.user_profile.has_value();
    c.mask.use_item_text = ds.item_text.has_value();
    c.mask.use_item_image = ds.item_image.has_value();
    c.mask.use_id_embeddings = true;
    if (ds.user_profile) c.user_profile_dim = ds.user_profile->dim();
    if (ds.item_text) c.item_text_dim = ds.item_text->dim();
    if (ds.item_image) c.item_image_dim = ds.item_image->dim();
    return c;
}

inline std::vector<SplitPlan> build_splits(const ExperimentConfig& cfg, const InteractionSet& data) {
    switch (cfg.split.kind) {
        case SplitKind::random: return {random_split(data, cfg.split.train_fraction, cfg.split.seed)};
        case SplitKind::cold_item:
            return {cold_item_split(data, cfg.split.cold_fraction, cfg.split.seed, cfg.split.train_fraction)};
        case SplitKind::kfold: return kfold(data, cfg.split.folds, cfg.split.seed);
    }
    throw UsageError("unknown split kind");
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Trains one row on plan.train and evaluates it on each requested test set.
inline std::vector<EvalReport> train_and_evaluate_row(RowKind kind, const ExperimentConfig& cfg, const Dataset& ds,
                                                      const FeatureIndex& index, const SplitPlan& plan,
                                                      const std::vector<std::vector<std::size_t>>& test_sets) {
    std::vector<EvalReport> reports;
    if (kind == RowKind::svd) {
        const auto trained = svd_train(ds.interactions, plan.train, cfg.svd);
        for (const auto& test : test_sets) reports.push_back(evaluate(trained.model, ds.interactions, plan.train, test, cfg.eval));
        return reports;
    }
    const ModelConfig mc = row_model_config(kind, base_model_config(cfg, ds));
    Rng init(cfg.train.seed);
    BonmfModel model(mc, ds.interactions.n_users(), ds.interactions.n_items(), init);
    fit(model, ds.interactions, plan.train, index, cfg.train);
    for (const auto& test : test_sets) reports.push_back(evaluate(model, ds.interactions, index, plan.train, test, cfg.eval));
    return reports;
}

struct ExperimentResult {
    ComparisonTable overall;
    std::optional<ComparisonTable> cold_only;
};

namespace detail {

inline ExperimentResult run_rows(const ExperimentConfig& cfg, const Dataset& ds, bool with_cold) {
    const auto plans = build_splits(cfg, ds.interactions);
    const FeatureIndex index(ds.interactions, ds.features());

    std::uint64_t fingerprint = 0;
    for (const auto& plan : plans) fingerprint = fingerprint * 0x100000001b3ULL ^ plan.fingerprint();

    std::vector<std::vector<std::size_t>> cold_sets;
    if (with_cold) {
        for (const auto& plan : plans) {
            cold_sets.push_back(cold_test_records(ds.interactions, plan));
            if (cold_sets.back().empty()) throw DataError("cold-start: the cold-item test subset is empty");
        }
    }

    std::vector<RowKind> rows;
    for (auto k : kCanonicalRows)
        if (std::find(cfg.rows.begin(), cfg.rows.end(), k) != cfg.rows.end()) rows.push_back(k);

    ExperimentResult result;
    if (with_cold) result.cold_only.emplace();
    for (auto kind : rows) {
        std::vector<EvalReport> overall;
        std::vector<EvalReport> cold;
        try {
            for (std::size_t p = 0; p < plans.size(); ++p) {
                std::vector<std::vector<std::size_t>> tests{plans[p].test};
                if (with_cold) tests.push_back(cold_sets[p]);
                auto reports = train_and_evaluate_row(kind, cfg, ds, index, plans[p], tests);
                overall.push_back(std::move(reports[0]));
                if (with_cold) cold.push_back(std::move(reports[1]));
            }
        } catch (const Error& e) {
            throw Error(e.kind(), std::string("row ") + row_display_name(kind) + ": " + e.what());
        }
        auto finish = [&](std::vector<EvalReport>& reports, const char* subset) {
            EvalReport r = reports.size() == 1 ? reports.front() : mean_report(reports);
            r.config["model"] = row_key(kind);
            r.config["split"] = to_string(cfg.split.kind);
            r.config["split_seed"] = std::to_string(cfg.split.seed);
            r.config["split_fingerprint"] = hex64(fingerprint);
            r.config["test_subset"] = subset;
            return TableRow{row_display_name(kind), std::move(r)};
        };
        result.overall.rows.push_back(finish(overall, "all"));
        if (with_cold) result.cold_only->rows.push_back(finish(cold, "cold_items"));
    }
    return result;
}

}  // namespace detail

/// Builds one split from the config seed, trains every requested row on it
/// and evaluates all rows on the same test records, in canonical row order.
inline ComparisonTable run_experiment(const ExperimentConfig& cfg, const Dataset& ds) {
    cfg.validate();
    return detail::run_rows(cfg, ds, false).overall;
}

inline ComparisonTable run_experiment(const ExperimentConfig& cfg) { return run_experiment(cfg, load_dataset(cfg)); }

/// As run_experiment on a cold_item split, additionally evaluating every row
/// on the test records of cold items only.
inline ExperimentResult run_cold_start(const ExperimentConfig& cfg, const Dataset& ds) {
    cfg.validate();
    if (cfg.split.kind != SplitKind::cold_item) throw UsageError("run_cold_start: split kind must be cold_item");
    return detail::run_rows(cfg, ds, true);
}

inline ExperimentResult run_cold_start(const ExperimentConfig& cfg) { return run_cold_start(cfg, load_dataset(cfg)); }

}  // namespace bonmf
