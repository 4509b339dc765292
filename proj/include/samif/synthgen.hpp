#pragma once

#include "samif/bundleio.hpp"
#include "samif/classifier.hpp"
#include "samif/maskops.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace samif {

/// Synthetic scenes with known class prototypes. Base class ids are
/// 1..n_base, novel ids follow.
struct SynthConfig {
    std::size_t image_h = 64;
    std::size_t image_w = 64;
    std::size_t c_in = 16;
    std::size_t embed_h = 8;
    std::size_t embed_w = 8;
    std::size_t n_base = 6;
    std::size_t n_novel = 3;
    std::size_t min_objects = 1;
    std::size_t max_objects = 4;
    /// Half extents of rectangles / semi-axes of ellipses, in pixels.
    std::size_t min_half_extent = 6;
    std::size_t max_half_extent = 10;
    double prototype_max_cos = 0.3;
    double noise_sigma = 0.05;
    std::size_t n_train_images = 30;
    std::size_t n_test_images = 20;
    std::size_t shot_images_per_class = 4;
    std::size_t train_points_per_image = 16;
    std::size_t points_per_side = 8;
    std::size_t erosion_kernel = 3;
    /// Smooth boundary ramp instead of clean +-2 logits.
    bool noisy_logits = false;
    std::uint64_t seed = 0;

    void validate() const;
    std::string to_json() const;
    /// Missing fields keep their defaults; unknown fields are rejected.
    static SynthConfig from_json(const std::string& text);

    ClassLayout layout() const;
};

enum class ShapeKind { Rectangle, Ellipse };

struct PlacedShape {
    ShapeKind kind = ShapeKind::Rectangle;
    int cx = 0;
    int cy = 0;
    int half_w = 0;
    int half_h = 0;
    int class_id = 0;
};

/// Exact pixel-centre rasterisation.
MaskGrid rasterize(const PlacedShape& shape, std::size_t h, std::size_t w);

/// Places 1..max non-overlapping shapes; throws Error("scene too crowded") after 1000 failed attempts.
std::vector<PlacedShape> place_shapes(const SynthConfig& cfg, const std::vector<int>& class_pool, std::size_t n_objects,
                                      Rng& rng);

/// Unit prototypes, one per layout row (background, base..., novel...), with
/// pairwise cosine below cfg.prototype_max_cos.
std::vector<std::vector<double>> make_prototypes(const SynthConfig& cfg, Rng& rng);

/// (prototype + N(0, sigma^2) per channel) broadcast over embed_h x embed_w.
Tensor sample_embedding(std::span<const double> prototype, double sigma, std::size_t embed_h, std::size_t embed_w,
                        Rng& rng);

/// Logits for a target region: +2 inside / -2 outside, or a smooth ramp in noisy mode.
LogitGrid region_logits(const MaskGrid& region, bool noisy);

struct SynthScene {
    std::int64_t image_id = 0;
    std::vector<PlacedShape> shapes;
    std::vector<MaskGrid> masks;
};

struct SynthDataset {
    SynthConfig config;
    ClassLayout layout;
    std::vector<std::vector<double>> prototypes;

    std::vector<SynthScene> train_scenes;
    std::vector<EmbeddingBundle> train_bundles;
    std::vector<std::vector<int>> train_labels;

    std::vector<SynthScene> test_scenes;
    std::vector<EmbeddingBundle> test_bundles;
    AnnotationSet test_annotations;

    std::vector<EmbeddingBundle> shot_bundles;
    /// `bundle` holds the index into shot_bundles as text until written to disk.
    std::vector<ShotRef> shot_refs;

    std::vector<TrainingSample> training_samples() const;
    std::map<int, std::vector<Tensor>> shot_pool() const;
};

/// Deterministic per cfg.seed.
SynthDataset generate_dataset(const SynthConfig& cfg);

/// Directory layout:
///   config.json  layout.json  prototypes.json
///   train/img_NNNN.sifb  train/labels.json
///   test/img_NNNN.sifb   test/annotations.json
///   shots/img_NNNN.sifb  shots/shots.json
void write_dataset(const SynthDataset& ds, const std::filesystem::path& dir);

} // namespace samif
