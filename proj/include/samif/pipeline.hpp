#pragma once

#include "samif/bundleio.hpp"
#include "samif/classifier.hpp"
#include "samif/maskops.hpp"

#include <string>
#include <vector>

namespace samif {

struct InferenceConfig {
    double stability_thresh = 0.95;
    double stability_tau = 0.0;
    double stability_delta = 1.0;
    double nms_iou = 0.7;
    /// Informational: the grid is fixed by the bundle; checked against its record count when > 0.
    std::size_t points_per_side = 0;

    void validate() const;
    /// Compact JSON echo for provenance.
    std::string to_json() const;
};

/// Per-point outcome, mostly for diagnostics and tests.
enum class PointFate { EmptyMask, Unstable, Background, Candidate };

struct InferenceTrace {
    std::vector<PointFate> fates;
    std::vector<Instance> candidates; // before NMS, in point order
};

/// Grid masks -> stability filter -> classify -> drop background -> NMS.
std::vector<Instance> run_inference(const EmbeddingBundle& bundle, const ClassifierModel& model,
                                    const InferenceConfig& cfg, InferenceTrace* trace = nullptr);

/// Predictions as annotation records (score and stability filled in).
AnnotationSet predictions_to_annotations(const EmbeddingBundle& bundle, const std::vector<Instance>& instances,
                                         const ClassLayout& layout, const InferenceConfig& cfg);

/// Category list derived from a layout (names "class_<id>").
std::vector<Category> categories_from_layout(const ClassLayout& layout);

} // namespace samif
