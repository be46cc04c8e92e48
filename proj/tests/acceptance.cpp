// Acceptance runner: one PASS/FAIL/SKIP line per criterion, non-zero exit if
// any criterion fails. Every tolerance and runtime budget is pinned below.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "bonmf/bonmf.hpp"
#include "malformed_corpus.hpp"
#include "model_fixtures.hpp"
#include "oracles.hpp"

#ifndef BONMF_SOURCE_DIR
#define BONMF_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace bonmf;

namespace {

struct Verdict {
    enum class State { pass, fail, skip } state = State::fail;
    std::string detail;
};

Verdict pass(std::string d) { return {Verdict::State::pass, std::move(d)}; }
Verdict fail(std::string d) { return {Verdict::State::fail, std::move(d)}; }
Verdict skip(std::string d) { return {Verdict::State::skip, std::move(d)}; }
Verdict check(bool ok, std::string d) { return ok ? pass(std::move(d)) : fail(std::move(d)); }

struct Criterion {
    int id;
    std::string title;
    double budget_seconds;
    std::function<Verdict()> run;
};

std::string num(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("bonmf_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ExperimentConfig reference_config() {
    return load_experiment_config(fs::path(BONMF_SOURCE_DIR) / "configs" / "reference_synthetic.ini");
}

void reseed(ExperimentConfig& cfg, std::uint64_t seed) {
    std::get<SyntheticSpec>(cfg.data).seed = seed;
    cfg.split.seed = seed;
    cfg.train.seed = seed;
    cfg.svd.seed = seed;
}

double row_mse(const ComparisonTable& table, const std::string& model) {
    for (const auto& row : table.rows)
        if (row.model == model) return row.report.mse;
    throw UsageError("row missing from table: " + model);
}

// ---------------------------------------------------------------------------

constexpr double kMetricTolerance = 1e-12;
constexpr int kMetricInstances = 1200;

Verdict metric_oracle() {
    Rng rng(1);
    double worst = 0.0;
    int compared = 0;
    for (int t = 0; t < kMetricInstances; ++t) {
        const std::size_t k = 1 + rng.below(6);
        std::vector<oracle::RankingInstance> instances;
        std::vector<RankedList> ranked;
        RelevanceJudgments judged;
        const std::size_t users = 1 + rng.below(3);
        for (std::size_t u = 0; u < users; ++u) {
            oracle::RankingInstance inst;
            const std::size_t n = 1 + rng.below(12);
            std::vector<ScoredItem> scored;
            for (std::size_t j = 0; j < n; ++j) {
                inst.items.push_back(j * 3 + rng.below(3));
                inst.scores.push_back(std::floor(rng.uniform(1, 5) * 2) / 2);
                if (rng.bernoulli(0.4)) inst.relevant.insert(inst.items.back());
                scored.push_back({inst.items.back(), inst.scores.back()});
            }
            if (!inst.relevant.empty()) judged.relevant[u] = inst.relevant;
            ranked.push_back(rank_items(u, scored, k));
            instances.push_back(std::move(inst));
        }
        const auto [p_ref, n_ref] = oracle::precision(instances, k);
        const auto [g_ref, g_n] = oracle::ndcg(instances, k);
        if (n_ref == 0) continue;
        const auto p = precision_at_k(ranked, judged, k);
        const auto g = ndcg_at_k(ranked, judged, k);
        if (p.n_scored != n_ref || g.n_scored != g_n) return fail("scored-user count disagrees at instance " + std::to_string(t));
        worst = std::max({worst, std::abs(p.value - p_ref), std::abs(g.value - g_ref)});
        ++compared;
    }
    return check(compared >= 1000 && worst <= kMetricTolerance,
                 std::to_string(compared) + " instances, max |diff| " + num(worst) + " (limit 1e-12)");
}

constexpr double kGradientTolerance = 1e-4;

Verdict gradient_check() {
    Rng rng(2);
    const auto masks = fixtures::all_masks();
    double worst = 0.0;
    std::size_t models = 0;
    for (int round = 0; round < 2; ++round)
        for (const auto& mask : masks) {
            const auto p = fixtures::make_tiny_problem(mask, rng);
            worst = std::max(worst, max_relative_error(fixtures::analytic_gradient(p), fixtures::numeric_gradient(p, 1e-5).span()));
            ++models;
        }
    return check(models >= 20 && worst < kGradientTolerance,
                 std::to_string(models) + " models over " + std::to_string(masks.size()) + " masks, max rel err " +
                     num(worst) + " (limit 1e-4)");
}

constexpr double kNoiseSigma = 0.1;
constexpr double kConvergenceSlack = 0.05;

Verdict planted_convergence() {
    ExperimentConfig cfg;
    SyntheticSpec spec;  // 500 x 300, latent 8, density 0.1, noise 0.1, seed 7
    spec.noise_sigma = kNoiseSigma;
    cfg.data = spec;
    cfg.split.seed = 7;
    cfg.train.seed = 7;
    cfg.rows = {RowKind::bonmf};
    const double limit = kNoiseSigma * kNoiseSigma + kConvergenceSlack;
    const double got = row_mse(run_experiment(cfg), "BoNMF");
    return check(got <= limit, "BoNMF test MSE " + num(got) + " after " + std::to_string(cfg.train.epochs) +
                                   " epochs (limit " + num(limit) + ")");
}

constexpr double kOrderingMargin = 0.05;

Verdict table_ordering() {
    std::vector<double> bonmf, nmd, no_text;
    for (std::uint64_t seed : {7, 8, 9}) {
        auto cfg = reference_config();
        reseed(cfg, seed);
        cfg.rows = {RowKind::bonmf, RowKind::nmd, RowKind::no_text};
        const auto table = run_experiment(cfg);
        bonmf.push_back(row_mse(table, "BoNMF"));
        nmd.push_back(row_mse(table, "NMD"));
        no_text.push_back(row_mse(table, "BoNMF-no-text"));
    }
    const double b = median3(bonmf), n = median3(nmd), t = median3(no_text);
    const double margin = (n - b) / n;
    return check(margin >= kOrderingMargin && b < t, "median MSE BoNMF " + num(b) + ", NMD " + num(n) + ", no-text " +
                                                         num(t) + "; margin over NMD " + num(100 * margin, 3) +
                                                         "% (need >= 5%)");
}

constexpr double kColdMargin = 0.20;

Verdict cold_start() {
    std::vector<double> bonmf, nmd;
    std::size_t invariance_checks = 0;
    for (std::uint64_t seed : {7, 8, 9}) {
        auto cfg = reference_config();
        reseed(cfg, seed);
        cfg.split.kind = SplitKind::cold_item;
        cfg.split.cold_fraction = 0.1;
        cfg.cold_start = true;
        cfg.rows = {RowKind::bonmf, RowKind::nmd};
        const Dataset ds = load_dataset(cfg);
        const auto result = run_cold_start(cfg, ds);
        bonmf.push_back(row_mse(*result.cold_only, "BoNMF"));
        nmd.push_back(row_mse(*result.cold_only, "NMD"));

        // SVD on the same split: every cold item must score identically for a given user.
        const auto plan = build_splits(cfg, ds.interactions).front();
        const auto svd = svd_train(ds.interactions, plan.train, cfg.svd).model;
        std::vector<std::size_t> cold;
        for (const auto& id : plan.cold_items) cold.push_back(*ds.interactions.find_item(id));
        for (std::size_t u = 0; u < ds.interactions.n_users(); ++u) {
            const double first = svd_predict(svd, u, cold.front());
            for (auto i : cold) {
                if (svd_predict(svd, u, i) != first)
                    return fail("SVD prediction varies across cold items for user " + ds.interactions.user_ids()[u]);
                ++invariance_checks;
            }
        }
    }
    const double b = median3(bonmf), n = median3(nmd);
    const double margin = (n - b) / n;
    return check(margin >= kColdMargin, "median cold-only MSE BoNMF " + num(b) + ", NMD " + num(n) + "; margin " +
                                            num(100 * margin, 3) + "% (need >= 20%); SVD item-invariant over " +
                                            std::to_string(invariance_checks) + " cold predictions");
}

constexpr double kSvdRmseLimit = 0.05;

Verdict svd_sanity() {
    // Noise-free rank-2 ratings on a dense 60 x 60 grid, 70/30 split.
    Rng rng(3);
    const std::size_t users = 60, items = 60;
    DenseMatrix p(users, 2), q(items, 2);
    for (double& v : p.span()) v = rng.uniform(-0.8, 0.8);
    for (double& v : q.span()) v = rng.uniform(-0.8, 0.8);
    InteractionSet data;
    for (std::size_t u = 0; u < users; ++u)
        for (std::size_t i = 0; i < items; ++i)
            data.add({"u" + std::to_string(u), "i" + std::to_string(i), 3.0 + dot(p.row(u), q.row(i)), {}});
    const auto plan = random_split(data, 0.7, 3);
    SvdConfig c;
    c.rank = 2;
    c.epochs = 50;
    c.learning_rate = 0.02;
    c.regularization = 0.0;
    const auto model = svd_train(data, plan.train, c).model;
    double sq = 0.0;
    for (auto r : plan.test) sq += std::pow(svd_predict(model, data.user_of(r), data.item_of(r)) - data.rating(r), 2);
    const double rmse = std::sqrt(sq / static_cast<double>(plan.test.size()));
    return check(rmse < kSvdRmseLimit, "rank-2 test RMSE " + num(rmse) + " after 50 epochs (limit 0.05)");
}

Verdict determinism() {
    const auto dir = scratch_dir("determinism");
    const std::string config = (fs::path(BONMF_SOURCE_DIR) / "configs" / "reference_synthetic.ini").string();
    for (const char* run : {"a", "b"}) {
        std::string err;
        const int code = corpus::invoke({"ablate", "--config", config, "--seed", "7", "--out", (dir / run).string()}, &err);
        if (code != 0) return fail(std::string("ablate run ") + run + " exited " + std::to_string(code) + ": " + err);
    }
    const auto a = corpus::slurp(dir / "a" / "table.json");
    const auto b = corpus::slurp(dir / "b" / "table.json");
    const auto rows = parse_table(a).rows.size();
    fs::remove_all(dir);
    return check(!a.empty() && a == b, std::to_string(rows) + "-row machine tables, " + std::to_string(a.size()) +
                                           " bytes, " + (a == b ? "identical" : "DIFFER"));
}

Verdict round_trips() {
    std::vector<std::string> failures;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    };

    const auto synth = generate_synthetic([] {
        SyntheticSpec s;
        s.n_users = 30;
        s.n_items = 20;
        s.density = 0.3;
        return s;
    }());
    const auto& data = synth.interactions;
    {
        std::stringstream csv, dat;
        write_ratings_csv(csv, data);
        expect(parse_ratings(csv, RatingFormat::csv) == data, "ratings csv");
        InteractionSet numeric;
        for (const auto& r : data.records())
            numeric.add({r.user_id.substr(1), r.item_id.substr(1), r.rating, 978300760});
        write_ratings_dat(dat, numeric);
        expect(parse_ratings(dat, RatingFormat::movielens_dat) == numeric, "ratings dat");
    }
    for (const auto* store : {&synth.item_text, &synth.item_image, &synth.user_profile}) {
        std::stringstream text, binary;
        write_feature_text(text, *store);
        write_feature_binary(binary, *store);
        const auto from_text = parse_feature_file(text, store->modality());
        const auto from_binary = parse_feature_file(binary, store->modality());
        expect(from_text == *store, "feature text " + std::string(to_string(store->modality())));
        // Binary stores f32, so equality holds after one narrowing.
        std::stringstream again;
        write_feature_binary(again, from_binary);
        expect(parse_feature_file(again, store->modality()) == from_binary, "feature binary " + std::string(to_string(store->modality())));
    }
    {
        Rng rng(4);
        ModelConfig mc;
        mc.id_embedding_dim = 4;
        mc.hidden_dims = {6, 3};
        mc.user_profile_dim = synth.user_profile.dim();
        mc.item_text_dim = synth.item_text.dim();
        mc.item_image_dim = synth.item_image.dim();
        const BonmfModel model(mc, data.n_users(), data.n_items(), rng);
        std::stringstream bytes;
        save_checkpoint(bytes, {data.user_ids(), data.item_ids(), model});
        expect(std::get<BonmfModel>(load_checkpoint(bytes).model) == model, "checkpoint bonmf");

        SvdConfig sc;
        sc.rank = 3;
        sc.epochs = 2;
        std::vector<std::size_t> all(data.size());
        std::iota(all.begin(), all.end(), 0);
        const auto svd = svd_train(data, all, sc).model;
        std::stringstream svd_bytes;
        save_checkpoint(svd_bytes, {data.user_ids(), data.item_ids(), svd});
        expect(std::get<SvdModel>(load_checkpoint(svd_bytes).model) == svd, "checkpoint svd");
    }
    {
        EvalReport r;
        r.mse = 0.1 + 0.2;
        r.precision_at_k = 1.0 / 3;
        r.ndcg_at_k = 2.0 / 3;
        r.k = 5;
        r.n_test_records = 12;
        r.n_users_scored = 4;
        r.n_users_skipped = 2;
        r.config["model"] = "bonmf";
        expect(parse_report(serialize_report(r)) == r, "report");
        const ComparisonTable table{{{"BoNMF", r}, {"SVD", r}}};
        expect(parse_table(serialize_table(table, TableFormat::machine)) == table, "table");
    }

    const auto dir = scratch_dir("corpus");
    corpus::write_valid_dataset(dir / "valid");
    const auto cases = corpus::cases(dir / "valid");
    std::size_t ok = 0;
    for (const auto& c : cases) {
        const auto o = corpus::run_case(c, dir / "valid", dir / "cases");
        if (o.code == cli::kExitData && !o.wrote_output) ++ok;
        else failures.push_back("corpus " + c.name + " exit " + std::to_string(o.code));
    }
    fs::remove_all(dir);

    std::string detail = "ratings csv/dat, features text/binary x3, checkpoint bonmf/svd, report, table; corpus " +
                         std::to_string(ok) + "/" + std::to_string(cases.size()) + " exit 2 with no output";
    for (const auto& f : failures) detail += "; FAILED " + f;
    return check(failures.empty() && cases.size() >= 15, detail);
}

// Optional real-data run. Point BONMF_MOVIELENS_DIR at a directory holding
// ratings.dat (or ratings.csv) and any of item_text, item_image,
// user_profile as .tsv or .ftb.
Verdict real_data() {
    const char* env = std::getenv("BONMF_MOVIELENS_DIR");
    if (!env || !*env) return skip("set BONMF_MOVIELENS_DIR to run on user-supplied MovieLens data");
    const fs::path src(env);
    std::ostringstream ini;
    ini << "[data]\nsource = files\n";
    if (fs::exists(src / "ratings.dat")) ini << "ratings = " << (src / "ratings.dat").string() << "\nratings_format = movielens_dat\n";
    else if (fs::exists(src / "ratings.csv")) ini << "ratings = " << (src / "ratings.csv").string() << "\nratings_format = csv\n";
    else return fail("no ratings.dat or ratings.csv in " + src.string());
    for (const char* modality : {"item_text", "item_image", "user_profile"})
        for (const char* ext : {".tsv", ".ftb"})
            if (fs::exists(src / (std::string(modality) + ext))) {
                ini << modality << " = " << (src / (std::string(modality) + ext)).string() << "\n";
                break;
            }
    const auto dir = scratch_dir("real");
    corpus::spit(dir / "real.ini", ini.str());
    std::string err;
    const int code = corpus::invoke({"ablate", "--config", (dir / "real.ini").string(), "--out", (dir / "out").string()}, &err);
    if (code != 0) return fail("ablate exited " + std::to_string(code) + ": " + err);
    std::istringstream table(corpus::slurp(dir / "out" / "table.txt"));
    std::string header;
    std::getline(table, header);
    // Columns are padded for alignment; compare the cell sequence.
    std::string collapsed;
    for (char ch : header)
        if (ch != ' ' || (!collapsed.empty() && collapsed.back() != ' ')) collapsed += ch;
    while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
    return check(collapsed == "Model | MSE | Precision@K | NDCG", "table header '" + header + "', output in " + (dir / "out").string());
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "metric oracle equivalence", 10, metric_oracle},
        {2, "gradient correctness", 30, gradient_check},
        {3, "planted-model convergence", 120, planted_convergence},
        {4, "model ordering on synthetic multimodal data", 300, table_ordering},
        {5, "cold-start advantage", 300, cold_start},
        {6, "SVD baseline sanity", 30, svd_sanity},
        {7, "determinism", 600, determinism},
        {8, "format round-trips and malformed inputs", 60, round_trips},
        {9, "real-data path (opt-in)", 1e9, real_data},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (v.state == Verdict::State::pass && secs > c.budget_seconds) {
            v.state = Verdict::State::fail;
            v.detail += "; over runtime budget";
        }
        const char* tag = v.state == Verdict::State::pass ? "PASS" : v.state == Verdict::State::fail ? "FAIL" : "SKIP";
        if (v.state == Verdict::State::fail) ++failed;
        std::cout << tag << "  criterion " << c.id << " (" << c.title << "): " << v.detail << " [" << num(secs, 3) << " s";
        if (c.budget_seconds < 1e8) std::cout << ", budget " << c.budget_seconds << " s";
        std::cout << "]" << std::endl;
    }
    std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criterion(s) failed" : std::string("acceptance: all criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
