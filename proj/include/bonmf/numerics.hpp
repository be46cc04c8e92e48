#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "bonmf/error.hpp"
#include "bonmf/rng.hpp"

namespace bonmf {

/// Fixed-length vector of doubles.
class DenseVector {
public:
    DenseVector() = default;
    explicit DenseVector(std::size_t n, double fill = 0.0) : values_(n, fill) {}
    DenseVector(std::initializer_list<double> init) : values_(init) {}
    explicit DenseVector(std::vector<double> values) : values_(std::move(values)) {}

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    std::span<double> span() noexcept { return values_; }
    std::span<const double> span() const noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    auto begin() noexcept { return values_.begin(); }
    auto end() noexcept { return values_.end(); }
    auto begin() const noexcept { return values_.begin(); }
    auto end() const noexcept { return values_.end(); }

    bool operator==(const DenseVector&) const = default;

private:
    std::vector<double> values_;
};

/// Row-major matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
    DenseMatrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        values_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw DimensionError("DenseMatrix literal row", cols_, row.size());
            values_.insert(values_.end(), row.begin(), row.end());
        }
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {values_.data() + r * cols_, cols_};
    }

    std::span<double> span() noexcept { return values_; }
    std::span<const double> span() const noexcept { return values_; }

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("dot", a.size(), b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline bool all_finite(std::span<const double> values) noexcept {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

/// output = weights * input + bias
inline DenseVector affine_forward(std::span<const double> input, const DenseMatrix& weights,
                                  std::span<const double> bias) {
    if (input.size() != weights.cols()) throw DimensionError("affine_forward input", weights.cols(), input.size());
    if (bias.size() != weights.rows()) throw DimensionError("affine_forward bias", weights.rows(), bias.size());
    DenseVector out(weights.rows());
    for (std::size_t i = 0; i < weights.rows(); ++i) {
        const auto w = weights.row(i);
        double acc = bias[i];
        for (std::size_t j = 0; j < input.size(); ++j) acc += w[j] * input[j];
        out[i] = acc;
    }
    return out;
}

struct AffineGradients {
    DenseVector input;
    DenseMatrix weights;
    DenseVector bias;
};

/// Accumulating form used by the trainer: adds upstream outer input into
/// grad_weights and upstream into grad_bias, and writes grad_input (if non-empty).
inline void affine_backward_into(std::span<const double> upstream, std::span<const double> input,
                                 const DenseMatrix& weights, std::span<double> grad_input,
                                 DenseMatrix& grad_weights, std::span<double> grad_bias) {
    if (upstream.size() != weights.rows()) throw DimensionError("affine_backward upstream", weights.rows(), upstream.size());
    if (input.size() != weights.cols()) throw DimensionError("affine_backward input", weights.cols(), input.size());
    if (grad_weights.rows() != weights.rows() || grad_weights.cols() != weights.cols())
        throw DimensionError("affine_backward grad_weights", weights.rows() * weights.cols(),
                             grad_weights.rows() * grad_weights.cols());
    if (!grad_input.empty()) std::fill(grad_input.begin(), grad_input.end(), 0.0);
    for (std::size_t i = 0; i < weights.rows(); ++i) {
        const double g = upstream[i];
        grad_bias[i] += g;
        if (g == 0.0) continue;
        auto gw = grad_weights.row(i);
        for (std::size_t j = 0; j < input.size(); ++j) gw[j] += g * input[j];
        if (!grad_input.empty()) {
            const auto w = weights.row(i);
            for (std::size_t j = 0; j < input.size(); ++j) grad_input[j] += w[j] * g;
        }
    }
}

inline AffineGradients affine_backward(std::span<const double> upstream, std::span<const double> input,
                                       const DenseMatrix& weights) {
    AffineGradients grads{DenseVector(weights.cols()), DenseMatrix(weights.rows(), weights.cols()),
                          DenseVector(weights.rows())};
    affine_backward_into(upstream, input, weights, grads.input.span(), grads.weights, grads.bias.span());
    return grads;
}

inline DenseVector relu(std::span<const double> input) {
    DenseVector out(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
    return out;
}

/// Subgradient at exactly zero is taken as 0.
inline DenseVector relu_backward(std::span<const double> upstream, std::span<const double> input) {
    if (upstream.size() != input.size()) throw DimensionError("relu_backward", input.size(), upstream.size());
    DenseVector out(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? upstream[i] : 0.0;
    return out;
}

/// Uniform in [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
inline DenseMatrix xavier_init(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows == 0 || cols == 0) throw UsageError("xavier_init: zero dimension");
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    DenseMatrix m(rows, cols);
    for (double& v : m.span()) v = rng.uniform(-bound, bound);
    return m;
}

inline DenseMatrix gaussian_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    DenseMatrix m(rows, cols);
    for (double& v : m.span()) v = rng.normal(0.0, stddev);
    return m;
}

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences, one coordinate at a time.
inline DenseVector finite_difference_gradient(const ScalarFunction& f, std::span<const double> x, double h) {
    if (!(h > 0.0)) throw UsageError("finite_difference_gradient: step must be positive");
    std::vector<double> probe(x.begin(), x.end());
    DenseVector grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double original = probe[i];
        probe[i] = original + h;
        const double up = f(probe);
        probe[i] = original - h;
        const double down = f(probe);
        probe[i] = original;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("finite_difference_gradient: non-finite function value at coordinate " +
                               std::to_string(i));
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor); the floor keeps near-zero
/// components from dominating.
inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
    if (a.size() != b.size()) throw DimensionError("max_relative_error", a.size(), b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

}  // namespace bonmf
