#include "doctest.h"

#include "helpers.hpp"
#include "oracles.hpp"

#include "samif/error.hpp"
#include "samif/evalkit.hpp"
#include "samif/incremental.hpp"
#include "samif/synthgen.hpp"

#include <algorithm>
#include <cmath>

using namespace samif;

namespace {

MaskGrid box(std::size_t y0, std::size_t x0, std::size_t y1, std::size_t x1, std::size_t h = 16, std::size_t w = 16) {
    MaskGrid m(h, w);
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) m.set(y, x);
    return m;
}

Instance inst(MaskGrid m, int cls, double score) {
    Instance i;
    i.mask = std::move(m);
    i.class_id = cls;
    i.score = score;
    return i;
}

// Hand-rolled 101-point interpolation: precision envelope sampled at recall k/100.
double reference_ap(const std::vector<bool>& tp, std::size_t n_gt) {
    double total = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = k / 100.0;
        double best = 0.0;
        std::size_t hits = 0;
        for (std::size_t i = 0; i < tp.size(); ++i) {
            hits += tp[i] ? 1 : 0;
            const double rec = static_cast<double>(hits) / static_cast<double>(n_gt);
            const double prec = static_cast<double>(hits) / static_cast<double>(i + 1);
            if (rec >= r) best = std::max(best, prec);
        }
        total += best;
    }
    return total / 101.0;
}

// Exhaustive version of the greedy matcher: for each prediction in score
// order, scan every ground truth and keep the best admissible one.
std::vector<std::optional<std::size_t>> reference_match(const std::vector<Instance>& preds,
                                                        const std::vector<GroundTruth>& gts, double thr) {
    std::vector<std::size_t> order(preds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return preds[a].score > preds[b].score; });
    std::vector<bool> used(gts.size(), false);
    std::vector<std::optional<std::size_t>> out(preds.size());
    for (auto p : order) {
        double best = -1.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[g] || gts[g].category_id != preds[p].class_id) continue;
            const double v = oracle::iou(preds[p].mask, gts[g].mask);
            if (v >= thr && v > best) {
                best = v;
                out[p] = g;
            }
        }
        if (out[p]) used[*out[p]] = true;
    }
    return out;
}

} // namespace

TEST_CASE("matching basics") {
    const auto m = box(2, 2, 8, 8);
    const std::vector<GroundTruth> gts{{1, 3, m}};
    CHECK(match_detections({inst(m, 3, 0.9)}, gts, 0.5)[0] == std::optional<std::size_t>(0));
    CHECK_FALSE(match_detections({inst(m, 4, 0.9)}, gts, 0.5)[0].has_value());
}

TEST_CASE("matching with crafted IoUs equals the exhaustive oracle") {
    // gt A = rows 0..8, gt B = rows 6..14 of a full-width band.
    const std::vector<GroundTruth> gts{{1, 1, box(0, 0, 8, 16)}, {1, 1, box(6, 0, 14, 16)}};
    const std::vector<Instance> preds{inst(box(1, 0, 9, 16), 1, 0.6), inst(box(5, 0, 13, 16), 1, 0.9),
                                      inst(box(0, 0, 7, 16), 1, 0.4)};
    for (double thr : {0.3, 0.5, 0.7, 0.9}) CHECK(match_detections(preds, gts, thr) == reference_match(preds, gts, thr));

    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        std::vector<GroundTruth> g;
        std::vector<Instance> p;
        for (int i = 0; i < 2; ++i) g.push_back({1, 1 + static_cast<int>(rng.next_index(2)), oracle::random_box(16, 16, rng)});
        for (int i = 0; i < 3; ++i)
            p.push_back(inst(oracle::random_box(16, 16, rng), 1 + static_cast<int>(rng.next_index(2)), rng.next_uniform()));
        for (double thr : {0.1, 0.3, 0.5}) REQUIRE(match_detections(p, g, thr) == reference_match(p, g, thr));
    }
}

TEST_CASE("AP fixtures") {
    const auto m = box(2, 2, 8, 8);
    const std::vector<GroundTruth> gts{{1, 3, m}};
    const std::vector<Prediction> one{{1, inst(m, 3, 0.9)}};
    CHECK(std::abs(*average_precision(one, gts, 3, 0.5) - 1.0) < 1e-12);

    const std::vector<Prediction> two{{1, inst(box(10, 10, 14, 14), 3, 0.9)}, {1, inst(m, 3, 0.5)}};
    CHECK(std::abs(*average_precision(two, gts, 3, 0.5) - 0.5) < 1e-12);

    CHECK(*average_precision({}, gts, 3, 0.5) == 0.0);
    CHECK_FALSE(average_precision(one, gts, 4, 0.5).has_value());
}

TEST_CASE("interpolated AP agrees with the hand-rolled envelope") {
    CHECK(interpolated_ap({true}, 1) == 1.0);
    CHECK(std::abs(interpolated_ap({false, true}, 1) - 0.5) < 1e-12);
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        std::vector<bool> tp(rng.next_index(30));
        std::size_t hits = 0;
        for (std::size_t i = 0; i < tp.size(); ++i) {
            tp[i] = rng.next_uniform() < 0.5;
            hits += tp[i] ? 1 : 0;
        }
        const std::size_t n_gt = std::max<std::size_t>(hits, 1) + rng.next_index(4);
        CHECK(std::abs(interpolated_ap(tp, n_gt) - reference_ap(tp, n_gt)) < 1e-12);
    }
}

namespace {

struct Scene {
    std::vector<Prediction> preds;
    std::vector<GroundTruth> gts;
};

// Random images with jittered predictions around disjoint ground-truth boxes; scores distinct.
Scene random_scene(Rng& rng) {
    Scene s;
    std::size_t counter = 0;
    for (std::int64_t img = 0; img < 4; ++img) {
        for (int k = 0; k < 3; ++k) {
            const int cat = 1 + static_cast<int>(rng.next_index(3));
            // One object per 8x8 cell, so ground truths never overlap.
            const std::size_t y = (k == 2 ? 8 : 0) + rng.next_index(3), x = (k == 1 ? 8 : 0) + rng.next_index(3);
            s.gts.push_back({img, cat, box(y, x, y + 5, x + 5)});
            const std::size_t dy = rng.next_index(3), dx = rng.next_index(3);
            const int pcat = rng.next_uniform() < 0.8 ? cat : 1 + static_cast<int>(rng.next_index(3));
            s.preds.push_back({img, inst(box(y + dy, x + dx, std::min<std::size_t>(y + dy + 5, 16),
                                             std::min<std::size_t>(x + dx + 5, 16)),
                                         pcat, 0.1 + 0.8 * rng.next_uniform() + 1e-9 * static_cast<double>(counter++))});
        }
    }
    return s;
}

} // namespace

TEST_CASE("AP bounds, AP50 >= AP, duplicates and permutation invariance") {
    Rng rng(5);
    const ClassLayout layout({1, 2}, {3});
    auto active = layout;
    active.active[3] = true;
    for (int t = 0; t < 30; ++t) {
        auto s = random_scene(rng);
        const auto r = evaluate_split(s.preds, s.gts, active);
        for (const auto& c : r.categories) {
            CHECK(c.ap >= 0.0);
            CHECK(c.ap <= 1.0);
            CHECK(c.ap50 >= c.ap - 1e-12);
        }

        auto shuffled_p = s.preds;
        auto shuffled_g = s.gts;
        rng.shuffle(shuffled_p);
        rng.shuffle(shuffled_g);
        const auto r2 = evaluate_split(shuffled_p, shuffled_g, active);
        REQUIRE(r2.categories.size() == r.categories.size());
        for (std::size_t i = 0; i < r.categories.size(); ++i) {
            CHECK(r2.categories[i].ap == r.categories[i].ap);
            CHECK(r2.categories[i].ap50 == r.categories[i].ap50);
        }

        // Duplicate a matched true positive at a lower score.
        for (int cat = 1; cat <= 3; ++cat) {
            const auto before = average_precision(s.preds, s.gts, cat, 0.5);
            if (!before) continue;
            for (std::int64_t img = 0; img < 4; ++img) {
                std::vector<Instance> ip;
                std::vector<GroundTruth> ig;
                for (const auto& p : s.preds)
                    if (p.image_id == img) ip.push_back(p.instance);
                for (const auto& g : s.gts)
                    if (g.image_id == img) ig.push_back(g);
                const auto matched = match_detections(ip, ig, 0.5);
                for (std::size_t i = 0; i < ip.size(); ++i) {
                    if (!matched[i] || ip[i].class_id != cat) continue;
                    auto dup = s.preds;
                    Prediction copy{img, ip[i]};
                    copy.instance.score *= 0.5;
                    dup.push_back(copy);
                    CHECK(*average_precision(dup, s.gts, cat, 0.5) <= *before + 1e-15);
                }
            }
        }
    }
}

TEST_CASE("split report: base only, then with an imprinted class") {
    const ClassLayout layout({1, 2}, {3});
    const std::vector<GroundTruth> gts{{1, 1, box(0, 0, 4, 4)}, {1, 2, box(8, 8, 12, 12)}, {2, 3, box(0, 0, 6, 6)}};
    const std::vector<Prediction> preds{{1, inst(box(0, 0, 4, 4), 1, 0.9)},
                                        {1, inst(box(8, 8, 12, 12), 2, 0.8)},
                                        {2, inst(box(0, 0, 6, 6), 3, 0.7)}};
    const auto base_only = evaluate_split(preds, gts, layout);
    CHECK_FALSE(base_only.novel.has_value());
    CHECK(base_only.base.ap50 == 1.0);
    CHECK(base_only.overall.n_categories == 2);
    const auto table = report_to_table(base_only, "SAM-IF Base");
    CHECK(table.find("Overall") != std::string::npos);
    CHECK(table.find("Novel") != std::string::npos);
    CHECK(table.find("100.0") != std::string::npos);
    // Both novel cells render as "-".
    const auto last = table.substr(table.rfind("SAM-IF Base") + 11);
    CHECK(std::count(last.begin(), last.end(), '-') == 2);

    auto imprinted = layout;
    imprinted.active[3] = true;
    const auto full = evaluate_split(preds, gts, imprinted);
    REQUIRE(full.novel.has_value());
    CHECK(full.novel->ap50 == 1.0);
    CHECK(full.overall.n_categories == 3);
    CHECK(report_to_table(full).find(" - ") == std::string::npos);

    const auto json = report_to_json(full, R"({"seed": 4})");
    CHECK(json.find("\"seed\": 4") != std::string::npos);
    CHECK(report_to_json(base_only).find("\"novel\": null") != std::string::npos);
}

TEST_CASE("max detections per image") {
    const auto m = box(0, 0, 4, 4);
    std::vector<Prediction> preds;
    for (int i = 0; i < 150; ++i) preds.push_back({1, inst(box(10, 10, 12, 12), 1, 0.9 - i * 1e-4)});
    preds.push_back({1, inst(m, 1, 0.01)});
    const std::vector<GroundTruth> gts{{1, 1, m}};
    // The only true positive ranks 151st, beyond the cap.
    CHECK(*average_precision(preds, gts, 1, 0.5) == 0.0);
    preds.resize(99);
    preds.push_back({1, inst(m, 1, 0.01)});
    CHECK(*average_precision(preds, gts, 1, 0.5) > 0.0);
}

TEST_CASE("annotation conversions") {
    AnnotationSet s;
    s.images = {{5, 4, 4}};
    s.categories = {{1, "a", "base"}};
    MaskGrid m(4, 4);
    m.set(1, 2);
    s.annotations.push_back({1, 5, 1, rle_encode(m), 0.75, 1.0});
    const auto gts = ground_truths_from(s);
    REQUIRE(gts.size() == 1);
    CHECK(gts[0].mask == m);
    const auto preds = predictions_from(s);
    CHECK(preds[0].instance.score == 0.75);
    CHECK(preds[0].image_id == 5);
}

TEST_CASE("mean report is the arithmetic mean") {
    Report a, b;
    a.overall = {0.2, 0.4, 2};
    b.overall = {0.4, 0.8, 2};
    a.base = {0.1, 0.3, 1};
    b.base = {0.3, 0.5, 1};
    a.novel = SplitMetrics{0.5, 0.6, 1};
    a.categories = {{1, 0.1, 0.3, 2}};
    b.categories = {{1, 0.3, 0.5, 2}};
    const auto m = mean_report({a, b});
    CHECK(std::abs(m.overall.ap - 0.3) < 1e-12);
    CHECK(std::abs(m.overall.ap50 - 0.6) < 1e-12);
    CHECK(std::abs(m.categories[0].ap50 - 0.4) < 1e-12);
    REQUIRE(m.novel.has_value());
    CHECK(m.novel->ap == 0.5);
}

namespace {

struct SmallWorld {
    SynthDataset ds;
    ClassifierModel base;
    std::vector<GroundTruth> gts;
};

const SmallWorld& small_world() {
    static const SmallWorld w = [] {
        SmallWorld s;
        SynthConfig cfg;
        cfg.n_train_images = 8;
        cfg.n_test_images = 4;
        cfg.shot_images_per_class = 2;
        cfg.seed = 11;
        s.ds = generate_dataset(cfg);
        TrainConfig tc;
        tc.epochs = 10;
        tc.seed = 11;
        tc.dims = {cfg.c_in, 8, 16};
        s.base = train_classifier(s.ds.training_samples(), s.ds.layout, tc);
        s.gts = ground_truths_from(s.ds.test_annotations);
        return s;
    }();
    return w;
}

} // namespace

TEST_CASE("episodes: one repeat equals a manual imprint and evaluation") {
    const auto& w = small_world();
    const auto pool = w.ds.shot_pool();
    const InferenceConfig cfg;
    const auto res = run_fewshot_episodes(w.base, w.ds.test_bundles, w.gts, pool, cfg, 1, 99);
    REQUIRE(res.episodes.size() == 1);

    ClassifierModel m = w.base;
    for (const auto& [id, pick] : res.chosen_shots[0]) m = imprint_novel_class(m, {id, {pool.at(id)[pick]}});
    std::vector<Prediction> preds;
    for (const auto& b : w.ds.test_bundles)
        for (auto& i : run_inference(b, m, cfg)) preds.push_back({b.image_id, i});
    const auto manual = evaluate_split(preds, w.gts, m.layout);
    CHECK(manual.overall.ap == res.mean.overall.ap);
    CHECK(manual.overall.ap50 == res.mean.overall.ap50);
    CHECK(manual.base.ap50 == res.mean.base.ap50);
}

TEST_CASE("episodes: deterministic and averaged") {
    const auto& w = small_world();
    const auto pool = w.ds.shot_pool();
    const auto a = run_fewshot_episodes(w.base, w.ds.test_bundles, w.gts, pool, {}, 3, 5);
    const auto b = run_fewshot_episodes(w.base, w.ds.test_bundles, w.gts, pool, {}, 3, 5);
    CHECK(report_to_json(a.mean) == report_to_json(b.mean));
    CHECK(a.chosen_shots == b.chosen_shots);
    double sum = 0.0;
    for (const auto& e : a.episodes) sum += e.overall.ap50;
    CHECK(std::abs(a.mean.overall.ap50 - sum / 3.0) < 1e-12);

    auto missing = pool;
    missing.erase(missing.begin()->first);
    CHECK_THROWS_AS(run_fewshot_episodes(w.base, w.ds.test_bundles, w.gts, missing, {}, 1, 5), InvalidArgument);
    CHECK_THROWS_AS(run_fewshot_episodes(w.base, w.ds.test_bundles, w.gts, pool, {}, 0, 5), InvalidArgument);
}
