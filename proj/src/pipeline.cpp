#include "samif/pipeline.hpp"

#include "samif/error.hpp"

#include <json.hpp>

#include <cmath>

namespace samif {

void InferenceConfig::validate() const {
    if (!(stability_thresh >= 0.0 && stability_thresh <= 1.0)) throw InvalidArgument("stability_thresh must be in [0, 1]");
    if (!(stability_delta > 0.0)) throw InvalidArgument("stability delta must be positive");
    if (!std::isfinite(stability_tau)) throw InvalidArgument("stability tau must be finite");
    if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw InvalidArgument("nms_iou must be in (0, 1]");
}

std::string InferenceConfig::to_json() const {
    nlohmann::json j{{"stability_thresh", stability_thresh},
                     {"stability_tau", stability_tau},
                     {"stability_delta", stability_delta},
                     {"nms_iou", nms_iou},
                     {"points_per_side", points_per_side}};
    return j.dump();
}

std::vector<Instance> run_inference(const EmbeddingBundle& bundle, const ClassifierModel& model,
                                    const InferenceConfig& cfg, InferenceTrace* trace) {
    cfg.validate();
    bundle.validate();
    if (bundle.c_in != model.dims.c_in)
        throw InvalidArgument("shape mismatch: bundle c_in " + std::to_string(bundle.c_in) + " vs model c_in " +
                              std::to_string(model.dims.c_in));
    if (cfg.points_per_side > 0 && bundle.records.size() != cfg.points_per_side * cfg.points_per_side)
        throw InvalidArgument("shape mismatch: bundle has " + std::to_string(bundle.records.size()) +
                              " points, expected points_per_side^2");

    std::vector<Instance> candidates;
    for (std::size_t i = 0; i < bundle.records.size(); ++i) {
        const LogitGrid logits = bundle.image_logits(i);
        MaskGrid mask = binarize(logits, cfg.stability_tau);
        PointFate fate = PointFate::Candidate;
        if (mask.empty_mask()) {
            fate = PointFate::EmptyMask;
        } else {
            const double stability = stability_score(logits, cfg.stability_tau, cfg.stability_delta);
            if (stability < cfg.stability_thresh) {
                fate = PointFate::Unstable;
            } else {
                const auto fwd = classifier_forward(model, bundle.records[i].embedding);
                const std::size_t best = argmax_row(fwd.scores);
                if (best == 0) {
                    fate = PointFate::Background;
                } else {
                    candidates.push_back({std::move(mask), model.layout.class_id(best), fwd.scores[best], stability});
                }
            }
        }
        if (trace) trace->fates.push_back(fate);
    }
    if (trace) trace->candidates = candidates;
    return nms(candidates, cfg.nms_iou);
}

std::vector<Category> categories_from_layout(const ClassLayout& layout) {
    std::vector<Category> cats;
    for (int id : layout.base_class_ids) cats.push_back({id, "class_" + std::to_string(id), "base"});
    for (int id : layout.novel_class_ids) cats.push_back({id, "class_" + std::to_string(id), "novel"});
    return cats;
}

AnnotationSet predictions_to_annotations(const EmbeddingBundle& bundle, const std::vector<Instance>& instances,
                                         const ClassLayout& layout, const InferenceConfig& cfg) {
    AnnotationSet s;
    s.images.push_back({bundle.image_id, bundle.height, bundle.width});
    s.categories = categories_from_layout(layout);
    s.config_json = cfg.to_json();
    std::int64_t next_id = 1;
    for (const auto& inst : instances) {
        Annotation a;
        a.id = next_id++;
        a.image_id = bundle.image_id;
        a.category_id = inst.class_id;
        a.segmentation = rle_encode(inst.mask);
        a.score = inst.score;
        a.stability = inst.stability;
        s.annotations.push_back(std::move(a));
    }
    return s;
}

} // namespace samif
