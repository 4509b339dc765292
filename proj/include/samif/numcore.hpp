#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace samif {

/// Dense row-major tensor of doubles.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor vector(std::vector<double> values);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    // Rank-2 / rank-3 element access (no bounds checks).
    double& at(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }
    double& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }

    /// Row `i` of a rank-2 tensor.
    std::span<double> row(std::size_t i);
    std::span<const double> row(std::size_t i) const;

    void fill(double v) noexcept;
    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape) noexcept;

constexpr double kNormEpsilon = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// Unit-length copy of `v`. Throws InvalidArgument("zero-norm vector") when
/// ‖v‖ <= kNormEpsilon.
Tensor l2_normalize(const Tensor& v);
std::vector<double> l2_normalize(std::span<const double> v);

struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// -log softmax(scores)[label] and its gradient softmax - onehot(label).
/// Entries equal to -inf are treated as masked out (probability 0, gradient 0).
LossAndGrad softmax_cross_entropy(std::span<const double> scores, std::size_t label);

/// splitmix64 generator. Same seed gives the same stream on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) noexcept : seed_(seed), state_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t state() const noexcept { return state_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 bits of resolution.
    double next_uniform() noexcept;
    /// Uniform integer in [0, n). n must be positive.
    std::size_t next_index(std::size_t n);
    /// Standard normal via Box-Muller (consumes two uniforms per call).
    double next_normal() noexcept;
    /// Cumulative-sum inversion of one uniform draw.
    /// Throws InvalidArgument("degenerate distribution") if no weight is positive.
    std::size_t choose_weighted(std::span<const double> weights);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[next_index(i)]);
        }
    }

  private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

/// Derive an independent child seed (one splitmix64 step of `seed ^ salt`).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

} // namespace samif
