#pragma once

#include "samif/bundleio.hpp"
#include "samif/classifier.hpp"
#include "samif/maskops.hpp"
#include "samif/pipeline.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace samif {

struct GroundTruth {
    std::int64_t image_id = 0;
    int category_id = 0;
    MaskGrid mask;
};

struct Prediction {
    std::int64_t image_id = 0;
    Instance instance;
};

constexpr std::size_t kMaxDetsPerImage = 100;

/// For one image: greedy by descending score (ties keep input order). Each
/// prediction takes the unmatched same-category GT with the highest IoU >= iou_thresh.
/// Result is indexed like `preds`.
std::vector<std::optional<std::size_t>> match_detections(const std::vector<Instance>& preds,
                                                         const std::vector<GroundTruth>& gts, double iou_thresh);

/// 101-point interpolated AP from score-ranked TP flags.
double interpolated_ap(const std::vector<bool>& ranked_tp, std::size_t n_gt);

/// AP of one category at one IoU threshold over the whole dataset.
/// Returns nullopt when the category has no ground truth.
std::optional<double> average_precision(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                                        int category_id, double iou_thresh);

struct CategoryAp {
    int category_id = 0;
    double ap = 0.0;   // mean over IoU 0.50:0.05:0.95
    double ap50 = 0.0; // IoU 0.50
    std::size_t n_gt = 0;
};

/// AP / AP50 for every listed category that has at least one GT.
std::vector<CategoryAp> category_aps(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                                     const std::vector<int>& category_ids);

struct SplitMetrics {
    double ap = 0.0;
    double ap50 = 0.0;
    std::size_t n_categories = 0;
};

struct Report {
    SplitMetrics overall;
    SplitMetrics base;
    /// Empty when no novel class is imprinted (or none has ground truth).
    std::optional<SplitMetrics> novel;
    std::vector<CategoryAp> categories;
};

/// Scores base categories and imprinted novel categories; overall is the mean over both.
Report evaluate_split(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                      const ClassLayout& layout);

std::string report_to_json(const Report& report, const std::string& extra_json = {});
/// Aligned plain-text table: Overall / Base / Novel, AP and AP50 in percent, "-" for missing.
std::string report_to_table(const Report& report, const std::string& method = "SAM-IF");

std::vector<GroundTruth> ground_truths_from(const AnnotationSet& set);
std::vector<Prediction> predictions_from(const AnnotationSet& set);

/// Element-wise mean (categories matched by id).
Report mean_report(const std::vector<Report>& reports);

struct EpisodeResult {
    Report mean;
    std::vector<Report> episodes;
    /// Chosen pool index per novel class, per episode.
    std::vector<std::map<int, std::size_t>> chosen_shots;
};

/// Repeated 1-shot protocol: per episode draw one shot per novel class from an
/// episode-specific stream, imprint all, infer + evaluate, then remove the rows.
EpisodeResult run_fewshot_episodes(const ClassifierModel& base_model, const std::vector<EmbeddingBundle>& test_bundles,
                                   const std::vector<GroundTruth>& gts,
                                   const std::map<int, std::vector<Tensor>>& shot_pool, const InferenceConfig& cfg,
                                   std::size_t n_repeats, std::uint64_t seed, std::size_t shots_per_class = 1);

} // namespace samif
