#pragma once

#include "samif/numcore.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace samif {

/// Row layout of the cosine weight matrix: [background | base... | novel...].
/// Row 0 is background and carries category id 0.
struct ClassLayout {
    static constexpr int kBackgroundId = 0;

    std::vector<int> base_class_ids;
    std::vector<int> novel_class_ids;
    /// One flag per row. Background and base rows are always active.
    std::vector<bool> active;

    ClassLayout() = default;
    ClassLayout(std::vector<int> base_ids, std::vector<int> novel_ids);

    std::size_t total_classes() const noexcept { return 1 + base_class_ids.size() + novel_class_ids.size(); }
    std::size_t first_novel_row() const noexcept { return 1 + base_class_ids.size(); }

    /// Category id stored at `row` (0 for background).
    int class_id(std::size_t row) const;
    /// Row holding category `class_id`, if any.
    std::optional<std::size_t> row_of(int class_id) const;

    bool is_base(int class_id) const;
    bool is_novel(int class_id) const;
    bool is_active_row(std::size_t row) const { return active.at(row); }
    std::vector<int> active_novel_ids() const;

    /// Throws InvalidArgument on duplicate / reserved ids or a bad active vector.
    void validate() const;

    friend bool operator==(const ClassLayout&, const ClassLayout&) = default;
};

/// Trainable parameters. Gradients share the same type.
struct ClassifierParams {
    Tensor conv1_w; // c_mid x c_in x 3 x 3
    Tensor conv1_b; // c_mid
    Tensor conv2_w; // c_mid x c_mid x 3 x 3
    Tensor conv2_b; // c_mid
    Tensor fc_w;    // d x c_mid
    Tensor fc_b;    // d
    Tensor cos_w;   // C x d

    static constexpr std::size_t kCount = 7;
    static const std::array<const char*, kCount>& names();

    std::array<Tensor*, kCount> tensors();
    std::array<const Tensor*, kCount> tensors() const;

    static ClassifierParams zeros_like(const ClassifierParams& p);

    friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

struct ClassifierDims {
    std::size_t c_in = 16;
    std::size_t c_mid = 32;
    std::size_t feature_dim = 64;

    friend bool operator==(const ClassifierDims&, const ClassifierDims&) = default;
};

struct ClassifierModel {
    ClassifierDims dims;
    ClassifierParams params;
    double gamma = 7.0;
    ClassLayout layout;
    /// Mean training loss per epoch, filled by train_classifier.
    std::vector<double> epoch_losses;
    /// Free-form provenance (e.g. the training configuration), serialised with the model.
    std::map<std::string, std::string> metadata;

    std::size_t num_classes() const noexcept { return layout.total_classes(); }

    /// Checks shapes, finiteness, gamma > 0, and that inactive rows are zero.
    void validate() const;

    friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;
};

/// Zero-initialised model with the right shapes; all novel rows inactive.
ClassifierModel make_model(const ClassifierDims& dims, const ClassLayout& layout, double gamma = 7.0);

/// He-uniform convs/fc, zero biases, normalised Gaussian rows for background and base.
ClassifierModel init_model(const ClassifierDims& dims, const ClassLayout& layout, double gamma, std::uint64_t seed);

/// Intermediate activations needed by the backward pass.
struct FeatureTrace {
    Tensor hidden1; // c_mid x h x w, post-ReLU
    Tensor hidden2; // c_mid x h x w, post-ReLU
    std::vector<double> pooled; // c_mid
    std::vector<double> feature; // d
};

/// conv3x3 -> ReLU -> conv3x3 -> ReLU -> global mean pool -> fully connected.
std::vector<double> feature_extract(const ClassifierModel& model, const Tensor& x);
FeatureTrace feature_extract_traced(const ClassifierModel& model, const Tensor& x);

/// y[c] = gamma * f.W[c] / (|f| |W[c]|) for active rows, -inf for inactive ones.
std::vector<double> cosine_scores(const ClassifierModel& model, std::span<const double> feature);

struct ForwardResult {
    std::vector<double> scores;
    std::vector<double> feature;
};

ForwardResult classifier_forward(const ClassifierModel& model, const Tensor& x);

/// Index of the highest-scoring active row.
std::size_t argmax_row(std::span<const double> scores);

struct BackwardResult {
    double loss = 0.0;
    ClassifierParams grads;
};

/// Softmax cross-entropy of the cosine scores against row `label_row`, with exact
/// gradients for every parameter.
BackwardResult classifier_backward(const ClassifierModel& model, const Tensor& x, std::size_t label_row);

/// Loss only; used by gradient checks.
double classifier_loss(const ClassifierModel& model, const Tensor& x, std::size_t label_row);

struct TrainConfig {
    double learning_rate = 0.005;
    std::size_t point_batch = 16;
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
    double gamma = 7.0;
    ClassifierDims dims;

    void validate() const;
};

struct TrainingSample {
    Tensor input;  // c_in x h x w mask embedding
    int class_id;  // 0 for background
};

/// Plain mini-batch SGD on background + base classes.
ClassifierModel train_classifier(std::span<const TrainingSample> samples, const ClassLayout& layout,
                                 const TrainConfig& cfg);

} // namespace samif
