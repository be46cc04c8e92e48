#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bonmf/error.hpp"
#include "bonmf/numerics.hpp"
#include "bonmf/rng.hpp"

namespace bonmf {

// ---------------------------------------------------------------------------
// Text helpers

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, std::string_view sep) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    for (;;) {
        const auto next = s.find(sep, pos);
        if (next == std::string_view::npos) {
            out.push_back(s.substr(pos));
            return out;
        }
        out.push_back(s.substr(pos, next - pos));
        pos = next + sep.size();
    }
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
    s = trim(s);
    std::int64_t value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string format_float(float v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
bool read_le(std::istream& in, T& value) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    in.read(reinterpret_cast<char*>(&value), sizeof value);
    return static_cast<std::size_t>(in.gcount()) == sizeof value;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Interactions

inline constexpr double kRatingMin = 1.0;
inline constexpr double kRatingMax = 5.0;

struct InteractionRecord {
    std::string user_id;
    std::string item_id;
    double rating = 0.0;
    std::optional<std::int64_t> timestamp;

    bool operator==(const InteractionRecord&) const = default;
};

/// Records plus dense ID vocabularies assigned in first-appearance order.
class InteractionSet {
public:
    /// Throws DataError for empty IDs, out-of-range ratings and duplicate pairs.
    void add(InteractionRecord record) {
        if (record.user_id.empty() || record.item_id.empty()) throw DataError("empty user or item id");
        if (!(record.rating >= kRatingMin && record.rating <= kRatingMax))
            throw DataError("rating out of range: " + detail::format_double(record.rating));
        const std::size_t u = intern(user_index_, user_ids_, record.user_id);
        const std::size_t i = intern(item_index_, item_ids_, record.item_id);
        if (!pairs_.insert(pair_key(u, i)).second)
            throw DataError("duplicate rating for pair (" + record.user_id + ", " + record.item_id + ")");
        user_of_.push_back(u);
        item_of_.push_back(i);
        records_.push_back(std::move(record));
    }

    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    std::size_t n_users() const noexcept { return user_ids_.size(); }
    std::size_t n_items() const noexcept { return item_ids_.size(); }

    const std::vector<InteractionRecord>& records() const noexcept { return records_; }
    const InteractionRecord& record(std::size_t r) const { return records_.at(r); }
    std::size_t user_of(std::size_t r) const { return user_of_.at(r); }
    std::size_t item_of(std::size_t r) const { return item_of_.at(r); }
    double rating(std::size_t r) const { return records_.at(r).rating; }

    const std::vector<std::string>& user_ids() const noexcept { return user_ids_; }
    const std::vector<std::string>& item_ids() const noexcept { return item_ids_; }

    std::optional<std::size_t> find_user(const std::string& id) const { return find(user_index_, id); }
    std::optional<std::size_t> find_item(const std::string& id) const { return find(item_index_, id); }

    bool operator==(const InteractionSet& other) const { return records_ == other.records_; }

private:
    static std::uint64_t pair_key(std::size_t u, std::size_t i) {
        return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint64_t>(i);
    }

    static std::size_t intern(std::unordered_map<std::string, std::size_t>& index,
                              std::vector<std::string>& ids, const std::string& id) {
        const auto [it, inserted] = index.emplace(id, ids.size());
        if (inserted) ids.push_back(id);
        return it->second;
    }

    static std::optional<std::size_t> find(const std::unordered_map<std::string, std::size_t>& index,
                                           const std::string& id) {
        const auto it = index.find(id);
        if (it == index.end()) return std::nullopt;
        return it->second;
    }

    std::vector<InteractionRecord> records_;
    std::vector<std::size_t> user_of_;
    std::vector<std::size_t> item_of_;
    std::vector<std::string> user_ids_;
    std::vector<std::string> item_ids_;
    std::unordered_map<std::string, std::size_t> user_index_;
    std::unordered_map<std::string, std::size_t> item_index_;
    std::set<std::uint64_t> pairs_;
};

enum class RatingFormat { movielens_dat, csv };

/// `UserID::MovieID::Rating::Timestamp` lines, or CSV with header
/// `user_id,item_id,rating[,timestamp]`. Blank lines are skipped.
inline InteractionSet parse_ratings(std::istream& in, RatingFormat format) {
    InteractionSet set;
    std::string line;
    std::size_t line_no = 0;
    bool has_timestamp_column = true;
    bool header_seen = format == RatingFormat::movielens_dat;

    while (std::getline(in, line)) {
        ++line_no;
        const auto text = detail::trim(line);
        if (text.empty()) continue;

        if (!header_seen) {
            if (text == "user_id,item_id,rating") {
                has_timestamp_column = false;
            } else if (text != "user_id,item_id,rating,timestamp") {
                throw ParseError(line_no, "expected CSV header user_id,item_id,rating[,timestamp]",
                                 std::string(text));
            }
            header_seen = true;
            continue;
        }

        const auto fields = format == RatingFormat::movielens_dat ? detail::split(text, "::")
                                                                  : detail::split(text, ",");
        const std::size_t expected = format == RatingFormat::movielens_dat ? 4
                                     : has_timestamp_column               ? 4
                                                                          : 3;
        if (fields.size() != expected)
            throw ParseError(line_no, "expected " + std::to_string(expected) + " fields", std::string(text));

        InteractionRecord record;
        record.user_id = std::string(detail::trim(fields[0]));
        record.item_id = std::string(detail::trim(fields[1]));
        if (record.user_id.empty() || record.item_id.empty())
            throw ParseError(line_no, "empty user or item id", std::string(text));
        const auto rating = detail::parse_double(fields[2]);
        if (!rating || !std::isfinite(*rating)) throw ParseError(line_no, "malformed rating", std::string(text));
        if (*rating < kRatingMin || *rating > kRatingMax)
            throw ParseError(line_no, "rating out of range", std::string(text));
        record.rating = *rating;
        if (expected == 4 && !detail::trim(fields[3]).empty()) {
            const auto ts = detail::parse_int(fields[3]);
            if (!ts) throw ParseError(line_no, "malformed timestamp", std::string(text));
            record.timestamp = *ts;
        } else if (format == RatingFormat::movielens_dat) {
            throw ParseError(line_no, "missing timestamp", std::string(text));
        }

        try {
            set.add(std::move(record));
        } catch (const DataError& e) {
            throw ParseError(line_no, e.what(), std::string(text));
        }
    }
    return set;
}

/// Writes CSV; the timestamp column is emitted when any record carries one.
inline void write_ratings_csv(std::ostream& out, const InteractionSet& set) {
    const bool with_ts = std::any_of(set.records().begin(), set.records().end(),
                                     [](const InteractionRecord& r) { return r.timestamp.has_value(); });
    out << (with_ts ? "user_id,item_id,rating,timestamp\n" : "user_id,item_id,rating\n");
    for (const auto& r : set.records()) {
        out << r.user_id << ',' << r.item_id << ',' << detail::format_double(r.rating);
        if (with_ts) {
            out << ',';
            if (r.timestamp) out << *r.timestamp;
        }
        out << '\n';
    }
}

inline void write_ratings_dat(std::ostream& out, const InteractionSet& set) {
    for (const auto& r : set.records())
        out << r.user_id << "::" << r.item_id << "::" << detail::format_double(r.rating)
            << "::" << r.timestamp.value_or(0) << '\n';
}

// ---------------------------------------------------------------------------
// Feature stores

enum class Modality { item_text, item_image, user_profile };

inline const char* to_string(Modality m) {
    switch (m) {
        case Modality::item_text: return "item_text";
        case Modality::item_image: return "item_image";
        case Modality::user_profile: return "user_profile";
    }
    return "unknown";
}

inline std::optional<Modality> parse_modality(std::string_view s) {
    if (s == "item_text") return Modality::item_text;
    if (s == "item_image") return Modality::item_image;
    if (s == "user_profile") return Modality::user_profile;
    return std::nullopt;
}

class FeatureStore {
public:
    FeatureStore() = default;
    FeatureStore(Modality modality, std::size_t dim) : modality_(modality), dim_(dim) {
        if (dim == 0) throw DataError("feature store dim must be >= 1");
    }

    Modality modality() const noexcept { return modality_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return vectors_.size(); }

    void insert(const std::string& entity, DenseVector vector) {
        if (entity.empty()) throw DataError("empty entity id in feature store");
        if (vector.size() != dim_) throw DimensionError("feature vector for '" + entity + "'", dim_, vector.size());
        if (!all_finite(vector.span())) throw DataError("non-finite feature value for '" + entity + "'");
        if (!vectors_.emplace(entity, std::move(vector)).second)
            throw DataError("duplicate entity id '" + entity + "' in feature store");
    }

    const DenseVector* find(const std::string& entity) const {
        const auto it = vectors_.find(entity);
        return it == vectors_.end() ? nullptr : &it->second;
    }

    /// Entries sorted by entity id.
    const std::map<std::string, DenseVector>& entries() const noexcept { return vectors_; }

    bool operator==(const FeatureStore&) const = default;

private:
    Modality modality_ = Modality::item_text;
    std::size_t dim_ = 0;
    std::map<std::string, DenseVector> vectors_;
};

inline constexpr char kFeatureMagic[4] = {'F', 'T', 'v', '1'};

/// Text form: `#features v1 modality=<tag> dim=<d>` then `<id>\t<f1>,...,<fd>`.
inline void write_feature_text(std::ostream& out, const FeatureStore& store) {
    out << "#features v1 modality=" << to_string(store.modality()) << " dim=" << store.dim() << '\n';
    for (const auto& [id, vec] : store.entries()) {
        out << id << '\t';
        for (std::size_t j = 0; j < vec.size(); ++j) {
            if (j) out << ',';
            out << detail::format_double(vec[j]);
        }
        out << '\n';
    }
}

/// Binary form: `FTv1`, u32 dim, u64 count, then per entry u16 id length,
/// id bytes, dim little-endian f32 values.
inline void write_feature_binary(std::ostream& out, const FeatureStore& store) {
    out.write(kFeatureMagic, 4);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
    detail::write_le<std::uint64_t>(out, store.size());
    for (const auto& [id, vec] : store.entries()) {
        if (id.size() > 0xFFFF) throw DataError("entity id too long for binary feature file: " + id.substr(0, 32));
        detail::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
        for (double v : vec) detail::write_le<float>(out, static_cast<float>(v));
    }
}

namespace detail {

inline FeatureStore parse_feature_binary(std::istream& in, Modality modality) {
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
    if (!read_le(in, dim) || !read_le(in, count)) throw ParseError(0, "truncated binary feature header");
    if (dim == 0) throw ParseError(0, "binary feature file declares dim 0");
    FeatureStore store(modality, dim);
    for (std::uint64_t n = 0; n < count; ++n) {
        std::uint16_t len = 0;
        if (!read_le(in, len)) throw ParseError(0, "truncated binary feature entry " + std::to_string(n));
        std::string id(len, '\0');
        in.read(id.data(), len);
        if (static_cast<std::size_t>(in.gcount()) != len)
            throw ParseError(0, "truncated entity id in entry " + std::to_string(n));
        DenseVector vec(dim);
        for (std::uint32_t j = 0; j < dim; ++j) {
            float v = 0.0f;
            if (!read_le(in, v)) throw ParseError(0, "truncated vector for entity '" + id + "'");
            vec[j] = static_cast<double>(v);
        }
        try {
            store.insert(id, std::move(vec));
        } catch (const DataError& e) {
            throw ParseError(0, e.what());
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError(0, "trailing bytes after binary feature entries");
    return store;
}

inline FeatureStore parse_feature_text(std::istream& in, Modality expected) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError(1, "missing feature header");
    const auto header = detail::split(detail::trim(line), " ");
    if (header.size() != 4 || header[0] != "#features" || header[1] != "v1" ||
        header[2].substr(0, 9) != "modality=" || header[3].substr(0, 4) != "dim=")
        throw ParseError(1, "expected header '#features v1 modality=<tag> dim=<d>'", line);
    const auto modality = parse_modality(header[2].substr(9));
    if (!modality) throw ParseError(1, "unknown modality", line);
    if (*modality != expected)
        throw ParseError(1, std::string("modality mismatch: expected ") + to_string(expected) + ", file has " +
                                to_string(*modality));
    const auto dim = parse_int(header[3].substr(4));
    if (!dim || *dim <= 0) throw ParseError(1, "invalid dim", line);

    FeatureStore store(*modality, static_cast<std::size_t>(*dim));
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) continue;
        const auto tab = text.find('\t');
        if (tab == std::string_view::npos) throw ParseError(line_no, "expected <entity_id>\\t<values>", line);
        const std::string id(trim(text.substr(0, tab)));
        const auto parts = split(text.substr(tab + 1), ",");
        if (parts.size() != store.dim())
            throw ParseError(line_no,
                             "entity '" + id + "' has " + std::to_string(parts.size()) + " values, dim is " +
                                 std::to_string(store.dim()));
        DenseVector vec(store.dim());
        for (std::size_t j = 0; j < parts.size(); ++j) {
            const auto v = parse_double(parts[j]);
            if (!v) throw ParseError(line_no, "malformed value for entity '" + id + "'", std::string(parts[j]));
            vec[j] = *v;
        }
        try {
            store.insert(id, std::move(vec));
        } catch (const DataError& e) {
            throw ParseError(line_no, e.what());
        }
    }
    return store;
}

}  // namespace detail

/// Detects text vs binary encoding from the first bytes.
inline FeatureStore parse_feature_file(std::istream& in, Modality expected_modality) {
    std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kFeatureMagic, 4) == 0) {
        std::istringstream body(bytes.substr(4));
        return detail::parse_feature_binary(body, expected_modality);
    }
    std::istringstream body(std::move(bytes));
    return detail::parse_feature_text(body, expected_modality);
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitKind { random, cold_item, kfold };

inline const char* to_string(SplitKind k) {
    switch (k) {
        case SplitKind::random: return "random";
        case SplitKind::cold_item: return "cold_item";
        case SplitKind::kfold: return "kfold";
    }
    return "unknown";
}

struct SplitPlan {
    std::vector<std::size_t> train;  // sorted record indices
    std::vector<std::size_t> test;   // sorted record indices
    SplitKind kind = SplitKind::random;
    std::uint64_t seed = 0;
    std::set<std::string> cold_items;

    /// FNV-1a over every field that defines the split.
    std::uint64_t fingerprint() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](std::uint64_t v) {
            for (int b = 0; b < 8; ++b) {
                h ^= (v >> (8 * b)) & 0xFF;
                h *= 0x100000001b3ULL;
            }
        };
        mix(static_cast<std::uint64_t>(kind));
        mix(seed);
        mix(train.size());
        for (auto r : train) mix(r);
        mix(test.size());
        for (auto r : test) mix(r);
        return h;
    }

    bool operator==(const SplitPlan&) const = default;
};

namespace detail {

inline std::size_t floor_count(double fraction, std::size_t n) {
    // The small offset keeps products like 0.7 * 10 from flooring to 6.
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

}  // namespace detail

inline SplitPlan random_split(const InteractionSet& data, double train_fraction, std::uint64_t seed) {
    if (data.empty()) throw DataError("random_split: empty interaction set");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("random_split: train_fraction must be in (0,1)");
    std::vector<std::size_t> order(data.size());
    for (std::size_t r = 0; r < order.size(); ++r) order[r] = r;
    Rng rng(seed);
    rng.shuffle(std::span(order));
    const std::size_t n_train = detail::floor_count(train_fraction, order.size());

    SplitPlan plan;
    plan.kind = SplitKind::random;
    plan.seed = seed;
    plan.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    plan.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.test.begin(), plan.test.end());
    return plan;
}

/// A seeded cold_fraction of items (at least one) sends all of its records to
/// test; the remaining records are split train_fraction : rest.
inline SplitPlan cold_item_split(const InteractionSet& data, double cold_fraction, std::uint64_t seed,
                                 double train_fraction = 0.7) {
    if (data.empty()) throw DataError("cold_item_split: empty interaction set");
    if (!(cold_fraction > 0.0 && cold_fraction < 1.0)) throw UsageError("cold_item_split: cold_fraction must be in (0,1)");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("cold_item_split: train_fraction must be in (0,1)");

    Rng rng(seed);
    std::vector<std::size_t> items(data.n_items());
    for (std::size_t i = 0; i < items.size(); ++i) items[i] = i;
    rng.shuffle(std::span(items));
    const std::size_t n_cold = std::max<std::size_t>(1, detail::floor_count(cold_fraction, items.size()));
    std::vector<bool> is_cold(data.n_items(), false);
    SplitPlan plan;
    plan.kind = SplitKind::cold_item;
    plan.seed = seed;
    for (std::size_t k = 0; k < n_cold; ++k) {
        is_cold[items[k]] = true;
        plan.cold_items.insert(data.item_ids()[items[k]]);
    }

    std::vector<std::size_t> warm;
    for (std::size_t r = 0; r < data.size(); ++r) {
        if (is_cold[data.item_of(r)])
            plan.test.push_back(r);
        else
            warm.push_back(r);
    }
    rng.shuffle(std::span(warm));
    const std::size_t n_train = detail::floor_count(train_fraction, warm.size());
    if (n_train == 0) throw DataError("cold_item_split: cold items leave no training records");
    plan.train.assign(warm.begin(), warm.begin() + static_cast<std::ptrdiff_t>(n_train));
    plan.test.insert(plan.test.end(), warm.begin() + static_cast<std::ptrdiff_t>(n_train), warm.end());
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.test.begin(), plan.test.end());
    return plan;
}

/// Seeded shuffle cut into k contiguous folds; the first N mod k folds take
/// one extra record. Plan i tests on fold i.
inline std::vector<SplitPlan> kfold(const InteractionSet& data, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw UsageError("kfold: k must be >= 2");
    if (k > data.size()) throw UsageError("kfold: k=" + std::to_string(k) + " exceeds record count " +
                                          std::to_string(data.size()));
    std::vector<std::size_t> order(data.size());
    for (std::size_t r = 0; r < order.size(); ++r) order[r] = r;
    Rng rng(seed);
    rng.shuffle(std::span(order));

    const std::size_t base = data.size() / k;
    const std::size_t extra = data.size() % k;
    std::vector<SplitPlan> plans(k);
    std::size_t begin = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        auto& plan = plans[f];
        plan.kind = SplitKind::kfold;
        plan.seed = seed;
        for (std::size_t p = 0; p < order.size(); ++p)
            ((p >= begin && p < begin + len) ? plan.test : plan.train).push_back(order[p]);
        std::sort(plan.train.begin(), plan.train.end());
        std::sort(plan.test.begin(), plan.test.end());
        begin += len;
    }
    return plans;
}

/// Keeps only test records whose item is in plan.cold_items.
inline std::vector<std::size_t> cold_test_records(const InteractionSet& data, const SplitPlan& plan) {
    std::vector<std::size_t> out;
    for (auto r : plan.test)
        if (plan.cold_items.count(data.record(r).item_id)) out.push_back(r);
    return out;
}

}  // namespace bonmf
