#include "samif/numcore.hpp"

#include "samif/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace samif {

std::size_t shape_product(const std::vector<std::size_t>& shape) noexcept {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape product " + std::to_string(shape_product(shape_)));
    }
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

std::span<double> Tensor::row(std::size_t i) {
    return std::span<double>(data_).subspan(i * shape_[1], shape_[1]);
}

std::span<const double> Tensor::row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * shape_[1], shape_[1]);
}

void Tensor::fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

std::vector<double> l2_normalize(std::span<const double> v) {
    const double n = l2_norm(v);
    if (!(n > kNormEpsilon)) throw InvalidArgument("zero-norm vector");
    std::vector<double> out(v.begin(), v.end());
    for (auto& x : out) x /= n;
    return out;
}

Tensor l2_normalize(const Tensor& v) {
    if (v.rank() != 1) throw InvalidArgument("l2_normalize expects a rank-1 tensor");
    return Tensor::vector(l2_normalize(v.values()));
}

LossAndGrad softmax_cross_entropy(std::span<const double> scores, std::size_t label) {
    if (label >= scores.size()) throw InvalidArgument("label out of range");
    if (!std::isfinite(scores[label])) throw InvalidArgument("label refers to a masked score");
    double mx = -std::numeric_limits<double>::infinity();
    for (double s : scores) mx = std::max(mx, s);

    LossAndGrad out;
    out.grad.assign(scores.size(), 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isinf(scores[i]) && scores[i] < 0) continue;
        out.grad[i] = std::exp(scores[i] - mx);
        z += out.grad[i];
    }
    for (auto& g : out.grad) g /= z;
    out.loss = -(scores[label] - mx - std::log(z));
    out.grad[label] -= 1.0;
    return out;
}

std::uint64_t Rng::next_u64() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::next_uniform() noexcept {
    // Top 53 bits: equals mixed / 2^64 truncated to double precision, never rounds up to 1.
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::size_t Rng::next_index(std::size_t n) {
    if (n == 0) throw InvalidArgument("next_index: empty range");
    auto i = static_cast<std::size_t>(next_uniform() * static_cast<double>(n));
    return std::min(i, n - 1);
}

double Rng::next_normal() noexcept {
    const double u1 = 1.0 - next_uniform(); // (0, 1]
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::choose_weighted(std::span<const double> weights) {
    double total = 0.0;
    std::size_t last_positive = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] < 0 || !std::isfinite(weights[i])) throw InvalidArgument("weights must be finite and nonnegative");
        if (weights[i] > 0) last_positive = i;
        total += weights[i];
    }
    if (!(total > 0)) throw InvalidArgument("degenerate distribution");
    const double target = next_uniform() * total;
    double cum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        cum += weights[i];
        if (weights[i] > 0 && target < cum) return i;
    }
    return last_positive;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
    Rng r(seed ^ (salt * 0xD1B54A32D192ED03ULL));
    return r.next_u64();
}

} // namespace samif
