#include "samif/maskops.hpp"

#include "samif/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace samif {

MaskGrid::MaskGrid(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
    if (bits_.size() != height_ * width_) throw InvalidArgument("mask bits do not match dimensions");
    for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t MaskGrid::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

MaskGrid MaskGrid::inverted() const {
    MaskGrid out(height_, width_);
    for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] ? 0 : 1;
    return out;
}

bool MaskGrid::subset_of(const MaskGrid& other) const {
    if (!same_shape(other)) return false;
    for (std::size_t i = 0; i < bits_.size(); ++i)
        if (bits_[i] && !other.bits_[i]) return false;
    return true;
}

LogitGrid LogitGrid::upsample_nearest(std::size_t out_h, std::size_t out_w) const {
    if (height == 0 || width == 0) throw InvalidArgument("cannot upsample an empty logit grid");
    if (out_h == height && out_w == width) return *this;
    LogitGrid out(out_h, out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const std::size_t sy = y * height / out_h;
        for (std::size_t x = 0; x < out_w; ++x) out.at(y, x) = at(sy, x * width / out_w);
    }
    return out;
}

MaskGrid binarize(const LogitGrid& logits, double threshold) {
    MaskGrid m(logits.height, logits.width);
    for (std::size_t y = 0; y < logits.height; ++y)
        for (std::size_t x = 0; x < logits.width; ++x)
            if (logits.at(y, x) > threshold) m.set(y, x);
    return m;
}

StructuringElement::StructuringElement(std::size_t h, std::size_t w) : kh(h), kw(w) {
    if (kh % 2 == 0 || kw % 2 == 0) throw InvalidArgument("structuring element extents must be odd");
}

MaskGrid erode(const MaskGrid& mask, const StructuringElement& k) {
    const std::size_t h = mask.height(), w = mask.width();
    const std::size_t ry = k.kh / 2, rx = k.kw / 2;
    // Separable: a rectangle fits iff each row run of width kw fits, stacked kh rows high.
    MaskGrid horiz(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        std::size_t run = 0; // consecutive set pixels ending at x
        std::vector<std::size_t> runs(w);
        for (std::size_t x = 0; x < w; ++x) {
            run = mask.get(y, x) ? run + 1 : 0;
            runs[x] = run;
        }
        for (std::size_t x = rx; x + rx < w; ++x)
            if (runs[x + rx] >= k.kw) horiz.set(y, x);
    }
    MaskGrid out(h, w);
    for (std::size_t x = 0; x < w; ++x) {
        std::size_t run = 0;
        std::vector<std::size_t> runs(h);
        for (std::size_t y = 0; y < h; ++y) {
            run = horiz.get(y, x) ? run + 1 : 0;
            runs[y] = run;
        }
        for (std::size_t y = ry; y + ry < h; ++y)
            if (runs[y + ry] >= k.kh) out.set(y, x);
    }
    return out;
}

Rle rle_encode(const MaskGrid& mask) {
    Rle r;
    r.height = mask.height();
    r.width = mask.width();
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (std::size_t x = 0; x < mask.width(); ++x) {
        for (std::size_t y = 0; y < mask.height(); ++y) {
            const std::uint8_t v = mask.get(y, x) ? 1 : 0;
            if (v != current) {
                r.counts.push_back(run);
                run = 0;
                current = v;
            }
            ++run;
        }
    }
    r.counts.push_back(run);
    return r;
}

MaskGrid rle_decode(std::span<const std::uint32_t> counts, std::size_t height, std::size_t width) {
    const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    if (total != static_cast<std::uint64_t>(height) * width)
        throw FormatError(FormatErrorKind::CorruptRle, "corrupt RLE: counts sum to " + std::to_string(total) +
                                                           ", expected " + std::to_string(height * width));
    MaskGrid m(height, width);
    std::size_t pos = 0;
    bool value = false;
    for (auto c : counts) {
        if (value) {
            for (std::size_t i = pos; i < pos + c; ++i) m.set(i % height, i / height);
        }
        pos += c;
        value = !value;
    }
    return m;
}

MaskGrid rle_decode(const Rle& rle) { return rle_decode(rle.counts, rle.height, rle.width); }

double mask_iou(const MaskGrid& a, const MaskGrid& b) {
    if (!a.same_shape(b)) throw InvalidArgument("mask_iou: dimension mismatch");
    std::size_t inter = 0, uni = 0;
    const auto& ab = a.bits();
    const auto& bb = b.bits();
    for (std::size_t i = 0; i < ab.size(); ++i) {
        inter += ab[i] & bb[i];
        uni += ab[i] | bb[i];
    }
    if (uni == 0) throw InvalidArgument("undefined IoU: both masks empty");
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double stability_score(const LogitGrid& logits, double tau, double delta) {
    if (!(delta > 0)) throw InvalidArgument("stability delta must be positive");
    std::size_t strict = 0, loose = 0;
    for (double v : logits.values) {
        strict += v > tau + delta;
        loose += v > tau - delta;
    }
    if (loose == 0) return 0.0;
    // strict ⊆ loose, so the IoU is a size ratio.
    return static_cast<double>(strict) / static_cast<double>(loose);
}

std::vector<std::size_t> nms_indices(const std::vector<Instance>& instances, double iou_thresh) {
    if (!(iou_thresh > 0 && iou_thresh <= 1)) throw InvalidArgument("nms threshold must be in (0, 1]");
    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return instances[a].score > instances[b].score; });
    std::vector<std::size_t> kept;
    for (std::size_t i : order) {
        bool keep = true;
        for (std::size_t j : kept) {
            if (mask_iou(instances[i].mask, instances[j].mask) > iou_thresh) {
                keep = false;
                break;
            }
        }
        if (keep) kept.push_back(i);
    }
    return kept;
}

std::vector<Instance> nms(const std::vector<Instance>& instances, double iou_thresh) {
    std::vector<Instance> out;
    for (std::size_t i : nms_indices(instances, iou_thresh)) out.push_back(instances[i]);
    return out;
}

std::vector<SampledPoint> sample_training_points(const std::vector<MaskGrid>& instance_masks, std::size_t image_h,
                                                 std::size_t image_w, std::size_t n_points,
                                                 const StructuringElement& k, Rng& rng) {
    if (n_points < 1) throw InvalidArgument("n_points must be at least 1");
    MaskGrid union_mask(image_h, image_w);
    for (const auto& m : instance_masks) {
        if (m.height() != image_h || m.width() != image_w) throw InvalidArgument("instance mask dimension mismatch");
        for (std::size_t y = 0; y < image_h; ++y)
            for (std::size_t x = 0; x < image_w; ++x)
                if (m.get(y, x)) union_mask.set(y, x);
    }

    struct Region {
        int target;
        std::vector<std::uint32_t> pixels;
    };
    std::vector<Region> regions;
    auto add_region = [&](int target, const MaskGrid& m) {
        const MaskGrid e = erode(m, k);
        Region r{target, {}};
        for (std::size_t i = 0; i < e.bits().size(); ++i)
            if (e.bits()[i]) r.pixels.push_back(static_cast<std::uint32_t>(i));
        if (!r.pixels.empty()) regions.push_back(std::move(r));
    };
    for (std::size_t i = 0; i < instance_masks.size(); ++i) add_region(static_cast<int>(i), instance_masks[i]);
    add_region(kBackgroundTarget, union_mask.inverted());
    if (regions.empty()) throw InvalidArgument("no sampleable region");

    std::vector<SampledPoint> out;
    out.reserve(n_points);
    for (std::size_t n = 0; n < n_points; ++n) {
        const Region& r = regions[rng.next_index(regions.size())];
        const std::uint32_t p = r.pixels[rng.next_index(r.pixels.size())];
        SampledPoint s;
        s.point.x = static_cast<int>(p % image_w);
        s.point.y = static_cast<int>(p / image_w);
        s.target = r.target;
        out.push_back(s);
    }
    return out;
}

std::vector<PromptPoint> grid_points(std::size_t h, std::size_t w, std::size_t points_per_side) {
    if (points_per_side < 1) throw InvalidArgument("points_per_side must be at least 1");
    if (h == 0 || w == 0) throw InvalidArgument("image must be non-empty");
    const double n = static_cast<double>(points_per_side);
    auto coord = [n](std::size_t i, std::size_t extent) {
        const double c = std::floor((static_cast<double>(i) + 0.5) * static_cast<double>(extent) / n + 0.5);
        return static_cast<int>(std::clamp(c, 0.0, static_cast<double>(extent - 1)));
    };
    std::vector<PromptPoint> pts;
    pts.reserve(points_per_side * points_per_side);
    for (std::size_t j = 0; j < points_per_side; ++j)
        for (std::size_t i = 0; i < points_per_side; ++i) pts.push_back({coord(i, w), coord(j, h), true});
    return pts;
}

} // namespace samif
