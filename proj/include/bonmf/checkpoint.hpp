#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "bonmf/baselines.hpp"
#include "bonmf/data.hpp"
#include "bonmf/error.hpp"
#include "bonmf/model.hpp"

namespace bonmf {

// Binary checkpoint container; layout documented in docs/checkpoint_format.md.
// All integers and floats little-endian; float arrays are f64 so a save/load
// cycle is bit-exact.

inline constexpr char kCheckpointMagic[8] = {'B', 'O', 'N', 'M', 'F', 'C', 'K', '1'};

enum class CheckpointType : std::uint32_t { bonmf = 1, svd = 2 };

struct Checkpoint {
    std::vector<std::string> user_ids;  // model row r belongs to user_ids[r]
    std::vector<std::string> item_ids;
    std::variant<BonmfModel, SvdModel> model;
};

namespace detail {

class CheckpointWriter {
public:
    explicit CheckpointWriter(std::ostream& out) : out_(out) {}

    void u8(std::uint8_t v) { write_le(out_, v); }
    void u32(std::uint32_t v) { write_le(out_, v); }
    void u64(std::uint64_t v) { write_le(out_, v); }
    void f64(double v) { write_le(out_, v); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void strings(const std::vector<std::string>& v) {
        u64(v.size());
        for (const auto& s : v) str(s);
    }
    void flags(const std::vector<std::uint8_t>& v) {
        u64(v.size());
        for (auto b : v) u8(b);
    }
    void array(std::size_t rows, std::size_t cols, std::span<const double> values) {
        u64(rows);
        u64(cols);
        for (double v : values) f64(v);
    }
    void matrix(const DenseMatrix& m) { array(m.rows(), m.cols(), m.span()); }
    void vector(std::span<const double> v) { array(v.size(), 1, v); }

private:
    std::ostream& out_;
};

class CheckpointReader {
public:
    explicit CheckpointReader(std::istream& in) : in_(in) {}

    template <typename T>
    T scalar(const char* what) {
        T v{};
        if (!read_le(in_, v)) throw ParseError(0, std::string("checkpoint truncated while reading ") + what);
        return v;
    }
    std::uint8_t u8(const char* what) { return scalar<std::uint8_t>(what); }
    std::uint32_t u32(const char* what) { return scalar<std::uint32_t>(what); }
    std::uint64_t u64(const char* what) { return scalar<std::uint64_t>(what); }
    double f64(const char* what) { return scalar<double>(what); }

    std::size_t count(const char* what, std::uint64_t limit = 1ULL << 32) {
        const auto n = u64(what);
        if (n > limit) throw ParseError(0, std::string("checkpoint: implausible ") + what + " " + std::to_string(n));
        return static_cast<std::size_t>(n);
    }
    std::string str(const char* what) {
        const auto len = u32(what);
        if (len > (1U << 20)) throw ParseError(0, std::string("checkpoint: implausible string length for ") + what);
        std::string s(len, '\0');
        in_.read(s.data(), len);
        if (static_cast<std::size_t>(in_.gcount()) != len) throw ParseError(0, std::string("checkpoint truncated in ") + what);
        return s;
    }
    std::vector<std::string> strings(const char* what) {
        std::vector<std::string> out(count(what));
        for (auto& s : out) s = str(what);
        return out;
    }
    std::vector<std::uint8_t> flags(const char* what) {
        std::vector<std::uint8_t> out(count(what));
        for (auto& b : out) b = u8(what);
        return out;
    }
    DenseMatrix matrix(const char* what) {
        const auto rows = count(what);
        const auto cols = count(what);
        if (rows && cols > (1ULL << 32) / rows) throw ParseError(0, std::string("checkpoint: implausible shape for ") + what);
        DenseMatrix m(rows, cols);
        for (double& v : m.span()) v = f64(what);
        if (!all_finite(m.span())) throw ParseError(0, std::string("checkpoint: non-finite values in ") + what);
        return m;
    }
    std::vector<double> vector(const char* what) {
        auto m = matrix(what);
        if (m.cols() != 1) throw ParseError(0, std::string("checkpoint: expected column vector for ") + what);
        return {m.span().begin(), m.span().end()};
    }
    void expect_end() {
        if (in_.peek() != std::char_traits<char>::eof()) throw ParseError(0, "checkpoint: trailing bytes");
    }

private:
    std::istream& in_;
};

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    detail::CheckpointWriter w(out);
    out.write(kCheckpointMagic, 8);
    if (const auto* m = std::get_if<BonmfModel>(&ckpt.model)) {
        w.u32(static_cast<std::uint32_t>(CheckpointType::bonmf));
        w.strings(ckpt.user_ids);
        w.strings(ckpt.item_ids);
        const auto& c = m->config();
        w.u64(c.id_embedding_dim);
        w.u64(c.hidden_dims.size());
        for (auto h : c.hidden_dims) w.u64(h);
        w.u64(c.user_profile_dim);
        w.u64(c.item_text_dim);
        w.u64(c.item_image_dim);
        w.u8(c.mask.bits());
        w.f64(c.rating_min);
        w.f64(c.rating_max);
        w.flags(m->user_known());
        w.flags(m->item_known());
        w.matrix(m->user_table());
        w.matrix(m->item_table());
        w.u64(m->layers().size());
        for (const auto& layer : m->layers()) {
            w.matrix(layer.weights);
            w.vector(layer.bias.span());
        }
    } else {
        const auto& s = std::get<SvdModel>(ckpt.model);
        w.u32(static_cast<std::uint32_t>(CheckpointType::svd));
        w.strings(ckpt.user_ids);
        w.strings(ckpt.item_ids);
        w.f64(s.global_mean);
        w.flags(s.user_known);
        w.flags(s.item_known);
        w.vector(s.user_bias);
        w.vector(s.item_bias);
        w.matrix(s.user_factors);
        w.matrix(s.item_factors);
    }
    if (!out) throw DataError("checkpoint: write failed");
}

inline Checkpoint load_checkpoint(std::istream& in) {
    std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
        throw ParseError(0, "not a checkpoint file (bad magic)");
    std::istringstream body(bytes.substr(8));
    detail::CheckpointReader r(body);
    Checkpoint ckpt;
    const auto type = r.u32("type tag");
    ckpt.user_ids = r.strings("user ids");
    ckpt.item_ids = r.strings("item ids");
    try {
        if (type == static_cast<std::uint32_t>(CheckpointType::bonmf)) {
            ModelConfig c;
            c.id_embedding_dim = r.count("id_embedding_dim");
            c.hidden_dims.assign(r.count("hidden layer count", 64), 0);
            for (auto& h : c.hidden_dims) h = r.count("hidden width");
            c.user_profile_dim = r.count("user_profile_dim");
            c.item_text_dim = r.count("item_text_dim");
            c.item_image_dim = r.count("item_image_dim");
            c.mask = ModalityMask::from_bits(r.u8("modality mask"));
            c.rating_min = r.f64("rating_min");
            c.rating_max = r.f64("rating_max");
            auto user_known = r.flags("known users");
            auto item_known = r.flags("known items");
            auto user_table = r.matrix("user table");
            auto item_table = r.matrix("item table");
            std::vector<DenseLayer> layers(r.count("layer count", 64));
            for (auto& layer : layers) {
                layer.weights = r.matrix("layer weights");
                layer.bias = DenseVector(r.vector("layer bias"));
            }
            r.expect_end();
            ckpt.model = BonmfModel(std::move(c), std::move(user_table), std::move(item_table), std::move(user_known),
                                    std::move(item_known), std::move(layers));
            if (ckpt.user_ids.size() != std::get<BonmfModel>(ckpt.model).n_users() ||
                ckpt.item_ids.size() != std::get<BonmfModel>(ckpt.model).n_items())
                throw ParseError(0, "checkpoint: vocabulary size does not match embedding tables");
        } else if (type == static_cast<std::uint32_t>(CheckpointType::svd)) {
            SvdModel s;
            s.global_mean = r.f64("global mean");
            s.user_known = r.flags("known users");
            s.item_known = r.flags("known items");
            s.user_bias = r.vector("user bias");
            s.item_bias = r.vector("item bias");
            s.user_factors = r.matrix("user factors");
            s.item_factors = r.matrix("item factors");
            r.expect_end();
            if (s.user_factors.rows() != s.user_bias.size() || s.item_factors.rows() != s.item_bias.size() ||
                s.user_factors.cols() != s.item_factors.cols() || s.user_known.size() != s.user_bias.size() ||
                s.item_known.size() != s.item_bias.size() || ckpt.user_ids.size() != s.user_bias.size() ||
                ckpt.item_ids.size() != s.item_bias.size())
                throw ParseError(0, "checkpoint: inconsistent SVD array shapes");
            ckpt.model = std::move(s);
        } else {
            throw ParseError(0, "checkpoint: unknown type tag " + std::to_string(type));
        }
    } catch (const UsageError& e) {
        throw ParseError(0, std::string("checkpoint: invalid model config: ") + e.what());
    }
    return ckpt;
}

}  // namespace bonmf
