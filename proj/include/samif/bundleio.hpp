#pragma once

// On-disk formats.
//
// SIFB (embedding bundle) and SIFM (classifier model) share one container:
//
//   bytes 0..3    magic "SIFB" / "SIFM"
//   bytes 4..7    u32 version (= 1), little-endian
//   bytes 8..15   u64 header length N, little-endian
//   next N bytes  UTF-8 JSON header (compact, keys sorted)
//   remainder     raw little-endian payloads in header order; byte offsets in the
//                 header are relative to the start of the payload section.
//
// Bundle payloads are 32-bit floats, model payloads 64-bit floats.

#include "samif/classifier.hpp"
#include "samif/maskops.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace samif {

constexpr std::uint32_t kFormatVersion = 1;

struct PointRecord {
    PromptPoint point;
    LogitGrid logits;  // logit_h x logit_w
    Tensor embedding;  // c_in x embed_h x embed_w
};

struct EmbeddingBundle {
    std::int64_t image_id = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t c_in = 0;
    std::size_t embed_h = 0;
    std::size_t embed_w = 0;
    std::size_t logit_h = 0;
    std::size_t logit_w = 0;
    /// "synthetic" or "sam2-export".
    std::string provenance = "synthetic";
    /// Free text, e.g. which upstream tensor the embeddings were taken from.
    std::string provenance_note;
    std::vector<PointRecord> records;

    /// Throws FormatError(ShapeMismatch) on any inconsistency.
    void validate() const;
    /// Logits of record `i` resampled to the image resolution.
    LogitGrid image_logits(std::size_t i) const;

    /// Rounds every stored value to 32-bit precision (what a write/read cycle does).
    EmbeddingBundle rounded_to_float() const;
};

std::vector<std::uint8_t> encode_bundle(const EmbeddingBundle& bundle);
EmbeddingBundle decode_bundle(std::span<const std::uint8_t> bytes);
void write_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& path);
EmbeddingBundle read_bundle(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_model(const ClassifierModel& model);
ClassifierModel decode_model(std::span<const std::uint8_t> bytes);
void write_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel read_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// COCO-subset annotations

struct ImageInfo {
    std::int64_t id = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    friend bool operator==(const ImageInfo&, const ImageInfo&) = default;
};

struct Annotation {
    std::int64_t id = 0;
    std::int64_t image_id = 0;
    int category_id = 0;
    Rle segmentation;
    /// Present on predictions only.
    std::optional<double> score;
    std::optional<double> stability;

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct Category {
    int id = 0;
    std::string name;
    /// "base" or "novel".
    std::string split;

    friend bool operator==(const Category&, const Category&) = default;
};

struct AnnotationSet {
    std::vector<ImageInfo> images;
    std::vector<Annotation> annotations;
    std::vector<Category> categories;
    /// Optional JSON object text echoed under "config" (provenance of predictions).
    std::string config_json;

    /// Throws FormatError(ReferentialIntegrity) listing dangling ids.
    void validate() const;

    friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

std::string annotations_to_json(const AnnotationSet& set);
AnnotationSet annotations_from_json(const std::string& text);
AnnotationSet read_annotations(const std::filesystem::path& path);
void write_annotations(const AnnotationSet& set, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Workflow side files

std::string layout_to_json(const ClassLayout& layout);
ClassLayout layout_from_json(const std::string& text);
/// Accepts a layout JSON file or a SIFM model (uses its layout).
ClassLayout read_layout(const std::filesystem::path& path);
void write_layout(const ClassLayout& layout, const std::filesystem::path& path);

/// Per-point class labels for one training bundle (0 = background).
struct LabelledBundle {
    std::string bundle; // path relative to the labels file
    std::vector<int> labels;
};

struct TrainLabels {
    ClassLayout layout;
    std::vector<LabelledBundle> images;
};

TrainLabels read_train_labels(const std::filesystem::path& path);
void write_train_labels(const TrainLabels& labels, const std::filesystem::path& path);

/// "path/to/bundle.sifb:<point index>".
struct ShotRef {
    int class_id = 0;
    std::string bundle;
    std::size_t point_index = 0;
};

ShotRef parse_shot_ref(const std::string& ref, int class_id = 0);
std::string format_shot_ref(const ShotRef& ref);

std::vector<ShotRef> read_shot_pool(const std::filesystem::path& path);
void write_shot_pool(const std::vector<ShotRef>& shots, const std::filesystem::path& path);

/// Loads the embedding a shot refers to. Relative bundle paths resolve against `base_dir`.
Tensor load_shot_embedding(const ShotRef& ref, const std::filesystem::path& base_dir);

// ---------------------------------------------------------------------------

enum class FileKind { Bundle, Model, Annotations, Unknown };

/// Sniffs the magic bytes / JSON shape.
FileKind detect_file_kind(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace samif
