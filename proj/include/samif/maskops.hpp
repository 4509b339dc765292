#pragma once

#include "samif/numcore.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace samif {

/// H x W binary mask, row-major, one byte per pixel (0 or 1).
class MaskGrid {
  public:
    MaskGrid() = default;
    MaskGrid(std::size_t height, std::size_t width) : height_(height), width_(width), bits_(height * width, 0) {}
    MaskGrid(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool get(std::size_t y, std::size_t x) const noexcept { return bits_[y * width_ + x] != 0; }
    void set(std::size_t y, std::size_t x, bool v = true) noexcept { bits_[y * width_ + x] = v ? 1 : 0; }

    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

    std::size_t count() const noexcept;
    bool empty_mask() const noexcept { return count() == 0; }
    bool same_shape(const MaskGrid& o) const noexcept { return height_ == o.height_ && width_ == o.width_; }

    /// Pixelwise complement.
    MaskGrid inverted() const;
    /// True iff every set pixel of *this is set in `other`.
    bool subset_of(const MaskGrid& other) const;

    friend bool operator==(const MaskGrid&, const MaskGrid&) = default;

  private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// H x W real-valued mask logits, row-major.
struct LogitGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    LogitGrid() = default;
    LogitGrid(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

    double at(std::size_t y, std::size_t x) const noexcept { return values[y * width + x]; }
    double& at(std::size_t y, std::size_t x) noexcept { return values[y * width + x]; }

    /// Nearest-neighbour resample to out_h x out_w (source pixel floor(y * h / out_h)).
    LogitGrid upsample_nearest(std::size_t out_h, std::size_t out_w) const;

    friend bool operator==(const LogitGrid&, const LogitGrid&) = default;
};

/// Pixels strictly above `threshold`.
MaskGrid binarize(const LogitGrid& logits, double threshold);

/// Centre-anchored rectangular structuring element with odd extents.
struct StructuringElement {
    std::size_t kh = 3;
    std::size_t kw = 3;

    StructuringElement() = default;
    StructuringElement(std::size_t h, std::size_t w);
    static StructuringElement square(std::size_t k) { return {k, k}; }
};

struct PromptPoint {
    int x = 0;
    int y = 0;
    bool foreground = true;

    friend bool operator==(const PromptPoint&, const PromptPoint&) = default;
};

struct Instance {
    MaskGrid mask;
    int class_id = 0;
    double score = 0.0;
    double stability = 0.0;
};

/// Binary erosion: a pixel survives iff every pixel under the kernel is set.
/// Pixels outside the image count as unset.
MaskGrid erode(const MaskGrid& mask, const StructuringElement& k);

/// COCO uncompressed RLE: column-major runs, starting with a (possibly empty) zero-run.
struct Rle {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint32_t> counts;

    friend bool operator==(const Rle&, const Rle&) = default;
};

Rle rle_encode(const MaskGrid& mask);
/// Throws FormatError(CorruptRle, "corrupt RLE") if the counts do not sum to h*w.
MaskGrid rle_decode(const Rle& rle);
MaskGrid rle_decode(std::span<const std::uint32_t> counts, std::size_t height, std::size_t width);

/// |a & b| / |a | b|. Throws on shape mismatch or when both masks are empty.
double mask_iou(const MaskGrid& a, const MaskGrid& b);

/// IoU of the masks thresholded at tau + delta and tau - delta; 0 if the loose mask is empty.
double stability_score(const LogitGrid& logits, double tau, double delta);

/// Greedy class-agnostic NMS by descending score (ties: lower input index first).
/// Keeps an instance iff its IoU with every kept instance is <= iou_thresh.
std::vector<Instance> nms(const std::vector<Instance>& instances, double iou_thresh);
/// Same, returning the kept input indices in keep order.
std::vector<std::size_t> nms_indices(const std::vector<Instance>& instances, double iou_thresh);

constexpr int kBackgroundTarget = -1;

struct SampledPoint {
    PromptPoint point;
    /// Index into the instance list, or kBackgroundTarget.
    int target = kBackgroundTarget;
};

/// Instance-balanced training point sampling. Every mask (and the background,
/// the complement of their union) is eroded by `k`; each draw first picks one
/// non-empty target uniformly, then one pixel uniformly inside it.
std::vector<SampledPoint> sample_training_points(const std::vector<MaskGrid>& instance_masks, std::size_t image_h,
                                                 std::size_t image_w, std::size_t n_points,
                                                 const StructuringElement& k, Rng& rng);

/// n x n prompt grid at ((i + 0.5) w / n, (j + 0.5) h / n), rounded half-up and
/// clamped to the image; row-major (j outer).
std::vector<PromptPoint> grid_points(std::size_t h, std::size_t w, std::size_t points_per_side);

} // namespace samif
