#include "doctest.h"

#include "samif/error.hpp"
#include "samif/evalkit.hpp"
#include "samif/pipeline.hpp"
#include "samif/synthgen.hpp"

using namespace samif;

namespace {

struct World {
    SynthDataset ds;
    ClassifierModel model;
};

// Trained once, shared by every case below.
const World& world() {
    static const World w = [] {
        World s;
        SynthConfig cfg;
        cfg.n_train_images = 12;
        cfg.n_test_images = 6;
        cfg.shot_images_per_class = 1;
        cfg.seed = 21;
        s.ds = generate_dataset(cfg);
        TrainConfig tc;
        tc.seed = 21;
        tc.dims = {cfg.c_in, 16, 32};
        s.model = train_classifier(s.ds.training_samples(), s.ds.layout, tc);
        return s;
    }();
    return w;
}

// A scene with exactly one base object.
EmbeddingBundle single_object_bundle(int& class_id, MaskGrid& gt) {
    SynthConfig cfg;
    cfg.n_train_images = 1;
    cfg.n_test_images = 6;
    cfg.shot_images_per_class = 1;
    cfg.min_objects = 1;
    cfg.max_objects = 1;
    cfg.seed = 21;
    // Same seed as world(): identical prototypes, so the trained model applies.
    auto ds = generate_dataset(cfg);
    for (std::size_t i = 0; i < ds.test_scenes.size(); ++i) {
        const auto& sc = ds.test_scenes[i];
        if (ds.layout.is_base(sc.shapes[0].class_id)) {
            class_id = sc.shapes[0].class_id;
            gt = sc.masks[0];
            return ds.test_bundles[i];
        }
    }
    FAIL("no single-object scene with a base class");
    return {};
}

} // namespace

TEST_CASE("inference config validation and echo") {
    InferenceConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.to_json().find("\"nms_iou\":0.7") != std::string::npos);
    cfg.nms_iou = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.stability_delta = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.stability_thresh = 1.5;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("one clean object gives one instance of the right class") {
    const auto& w = world();
    REQUIRE(w.ds.prototypes.size() == w.ds.layout.total_classes());
    int cls = 0;
    MaskGrid gt;
    const auto bundle = single_object_bundle(cls, gt);
    InferenceTrace trace;
    const auto out = run_inference(bundle, w.model, {}, &trace);
    REQUIRE(out.size() == 1);
    CHECK(out[0].class_id == cls);
    CHECK(out[0].mask == gt);
    CHECK(out[0].stability == 1.0);
    CHECK(trace.fates.size() == bundle.records.size());
}

TEST_CASE("background-only embeddings produce nothing") {
    const auto& w = world();
    auto bundle = w.ds.test_bundles[0];
    Rng rng(3);
    for (auto& r : bundle.records) r.embedding = sample_embedding(w.ds.prototypes[0], 0.05, 8, 8, rng);
    InferenceTrace trace;
    CHECK(run_inference(bundle, w.model, {}, &trace).empty());
    for (auto f : trace.fates) CHECK((f == PointFate::Background || f == PointFate::EmptyMask));
}

TEST_CASE("duplicated grid points collapse to one instance") {
    const auto& w = world();
    int cls = 0;
    MaskGrid gt;
    auto bundle = single_object_bundle(cls, gt);
    const auto base_out = run_inference(bundle, w.model, {});
    REQUIRE(base_out.size() == 1);
    const auto records = bundle.records;
    for (const auto& r : records) bundle.records.push_back(r);
    InferenceTrace trace;
    const auto out = run_inference(bundle, w.model, {}, &trace);
    CHECK(out.size() == 1);
    CHECK(trace.candidates.size() >= 2);
}

TEST_CASE("pipeline invariants over the test split") {
    const auto& w = world();
    for (const auto& b : w.ds.test_bundles) {
        const InferenceConfig cfg;
        const auto out = run_inference(b, w.model, cfg);
        CHECK(out.size() == run_inference(b, w.model, cfg).size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out[i].class_id != ClassLayout::kBackgroundId);
            CHECK(out[i].mask.count() > 0);
            for (std::size_t j = i + 1; j < out.size(); ++j) CHECK(mask_iou(out[i].mask, out[j].mask) <= cfg.nms_iou);
        }
        // Determinism down to the masks and scores.
        const auto again = run_inference(b, w.model, cfg);
        REQUIRE(again.size() == out.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(again[i].mask == out[i].mask);
            CHECK(again[i].score == out[i].score);
        }
    }
}

TEST_CASE("raising the stability threshold never adds instances") {
    const auto& w = world();
    SynthConfig cfg;
    cfg.n_train_images = 1;
    cfg.n_test_images = 4;
    cfg.shot_images_per_class = 1;
    cfg.noisy_logits = true;
    cfg.seed = 21;
    const auto noisy = generate_dataset(cfg);
    for (const auto& b : noisy.test_bundles) {
        std::size_t prev = SIZE_MAX;
        for (double thr : {0.0, 0.5, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0}) {
            InferenceConfig ic;
            ic.stability_thresh = thr;
            const auto n = run_inference(b, w.model, ic).size();
            CHECK(n <= prev);
            prev = n;
        }
    }
}

TEST_CASE("points-per-side check and channel check") {
    const auto& w = world();
    InferenceConfig cfg;
    cfg.points_per_side = 8;
    CHECK_NOTHROW(run_inference(w.ds.test_bundles[0], w.model, cfg));
    cfg.points_per_side = 7;
    CHECK_THROWS_AS(run_inference(w.ds.test_bundles[0], w.model, cfg), InvalidArgument);
    auto other = make_model({4, 4, 4}, w.model.layout, 7.0);
    CHECK_THROWS_AS(run_inference(w.ds.test_bundles[0], other, {}), InvalidArgument);
}

TEST_CASE("predictions serialise as annotations with scores") {
    const auto& w = world();
    const auto& b = w.ds.test_bundles[0];
    const InferenceConfig cfg;
    const auto out = run_inference(b, w.model, cfg);
    const auto set = predictions_to_annotations(b, out, w.model.layout, cfg);
    CHECK_NOTHROW(set.validate());
    REQUIRE(set.annotations.size() == out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(set.annotations[i].score == out[i].score);
        CHECK(rle_decode(set.annotations[i].segmentation) == out[i].mask);
    }
    CHECK(set.config_json == cfg.to_json());
    CHECK(categories_from_layout(w.model.layout).size() == 9);
}
