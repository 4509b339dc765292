#include "samif/evalkit.hpp"

#include "samif/error.hpp"
#include "samif/incremental.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>

namespace samif {

namespace {

double safe_iou(const MaskGrid& a, const MaskGrid& b) {
    if (a.empty_mask() && b.empty_mask()) return 0.0;
    return mask_iou(a, b);
}

std::vector<std::size_t> score_order(const std::vector<Instance>& preds) {
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
    return order;
}

constexpr std::array<double, 10> kIouThresholds = {0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};

} // namespace

std::vector<std::optional<std::size_t>> match_detections(const std::vector<Instance>& preds,
                                                         const std::vector<GroundTruth>& gts, double iou_thresh) {
    std::vector<std::optional<std::size_t>> result(preds.size());
    std::vector<bool> taken(gts.size(), false);
    for (std::size_t p : score_order(preds)) {
        std::optional<std::size_t> best;
        double best_iou = iou_thresh;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g] || gts[g].category_id != preds[p].class_id) continue;
            const double iou = safe_iou(preds[p].mask, gts[g].mask);
            if (iou >= best_iou && (!best || iou > best_iou)) {
                best = g;
                best_iou = iou;
            }
        }
        if (best) {
            taken[*best] = true;
            result[p] = best;
        }
    }
    return result;
}

double interpolated_ap(const std::vector<bool>& ranked_tp, std::size_t n_gt) {
    if (n_gt == 0) throw InvalidArgument("interpolated_ap: no ground truth");
    const std::size_t n = ranked_tp.size();
    std::vector<double> recall(n), precision(n);
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        tp += ranked_tp[i] ? 1 : 0;
        recall[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    }
    for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double sum = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = static_cast<double>(k) / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
    return sum / 101.0;
}

namespace {

struct ImageGroup {
    std::vector<Instance> preds;
    std::vector<std::size_t> pred_order; // global insertion order
    std::vector<GroundTruth> gts;
};

// Group by image, keeping at most kMaxDetsPerImage top-scored predictions per image.
std::map<std::int64_t, ImageGroup> group_by_image(const std::vector<Prediction>& preds,
                                                  const std::vector<GroundTruth>& gts, int category_id) {
    std::map<std::int64_t, ImageGroup> groups;
    std::map<std::int64_t, std::vector<std::size_t>> all_by_image;
    for (std::size_t i = 0; i < preds.size(); ++i) all_by_image[preds[i].image_id].push_back(i);
    for (auto& [image, idx] : all_by_image) {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return preds[a].instance.score > preds[b].instance.score; });
        if (idx.size() > kMaxDetsPerImage) idx.resize(kMaxDetsPerImage);
        std::sort(idx.begin(), idx.end());
        for (std::size_t i : idx) {
            if (preds[i].instance.class_id != category_id) continue;
            groups[image].preds.push_back(preds[i].instance);
            groups[image].pred_order.push_back(i);
        }
    }
    for (const auto& g : gts)
        if (g.category_id == category_id) groups[g.image_id].gts.push_back(g);
    return groups;
}

struct RankedDet {
    double score;
    std::size_t order;
    bool tp;
};

double ap_from_groups(const std::map<std::int64_t, ImageGroup>& groups, double iou_thresh, std::size_t n_gt) {
    std::vector<RankedDet> dets;
    for (const auto& [image, g] : groups) {
        const auto matches = match_detections(g.preds, g.gts, iou_thresh);
        for (std::size_t i = 0; i < g.preds.size(); ++i)
            dets.push_back({g.preds[i].score, g.pred_order[i], matches[i].has_value()});
    }
    std::sort(dets.begin(), dets.end(), [](const RankedDet& a, const RankedDet& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.order < b.order;
    });
    std::vector<bool> ranked;
    ranked.reserve(dets.size());
    for (const auto& d : dets) ranked.push_back(d.tp);
    return interpolated_ap(ranked, n_gt);
}

std::size_t count_gt(const std::vector<GroundTruth>& gts, int category_id) {
    return static_cast<std::size_t>(
        std::count_if(gts.begin(), gts.end(), [&](const GroundTruth& g) { return g.category_id == category_id; }));
}

} // namespace

std::optional<double> average_precision(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                                        int category_id, double iou_thresh) {
    const std::size_t n_gt = count_gt(gts, category_id);
    if (n_gt == 0) return std::nullopt;
    return ap_from_groups(group_by_image(preds, gts, category_id), iou_thresh, n_gt);
}

std::vector<CategoryAp> category_aps(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                                     const std::vector<int>& category_ids) {
    std::vector<CategoryAp> out;
    for (int cat : category_ids) {
        const std::size_t n_gt = count_gt(gts, cat);
        if (n_gt == 0) continue;
        const auto groups = group_by_image(preds, gts, cat);
        CategoryAp c;
        c.category_id = cat;
        c.n_gt = n_gt;
        double sum = 0.0;
        for (double t : kIouThresholds) {
            const double ap = ap_from_groups(groups, t, n_gt);
            if (t == 0.50) c.ap50 = ap;
            sum += ap;
        }
        c.ap = sum / static_cast<double>(kIouThresholds.size());
        out.push_back(c);
    }
    return out;
}

namespace {

SplitMetrics summarize(const std::vector<CategoryAp>& cats, const std::set<int>& members) {
    SplitMetrics m;
    for (const auto& c : cats) {
        if (!members.contains(c.category_id)) continue;
        m.ap += c.ap;
        m.ap50 += c.ap50;
        ++m.n_categories;
    }
    if (m.n_categories > 0) {
        m.ap /= static_cast<double>(m.n_categories);
        m.ap50 /= static_cast<double>(m.n_categories);
    }
    return m;
}

} // namespace

Report evaluate_split(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                      const ClassLayout& layout) {
    const std::set<int> base(layout.base_class_ids.begin(), layout.base_class_ids.end());
    const auto novel_ids = layout.active_novel_ids();
    const std::set<int> novel(novel_ids.begin(), novel_ids.end());
    std::vector<int> ids(base.begin(), base.end());
    ids.insert(ids.end(), novel.begin(), novel.end());
    std::sort(ids.begin(), ids.end());

    Report r;
    r.categories = category_aps(preds, gts, ids);
    std::set<int> all(ids.begin(), ids.end());
    r.overall = summarize(r.categories, all);
    r.base = summarize(r.categories, base);
    const SplitMetrics nm = summarize(r.categories, novel);
    if (nm.n_categories > 0) r.novel = nm;
    return r;
}

std::string report_to_json(const Report& report, const std::string& extra_json) {
    using nlohmann::json;
    auto split = [](const SplitMetrics& m) {
        return json{{"ap", m.ap}, {"ap50", m.ap50}, {"n_categories", m.n_categories}};
    };
    json j;
    j["overall"] = split(report.overall);
    j["base"] = split(report.base);
    j["novel"] = report.novel ? split(*report.novel) : json(nullptr);
    json cats = json::array();
    for (const auto& c : report.categories)
        cats.push_back({{"category_id", c.category_id}, {"ap", c.ap}, {"ap50", c.ap50}, {"n_gt", c.n_gt}});
    j["categories"] = std::move(cats);
    if (!extra_json.empty()) {
        const json extra = json::parse(extra_json);
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    }
    return j.dump(1) + "\n";
}

std::string report_to_table(const Report& report, const std::string& method) {
    auto cell = [](std::optional<double> v) {
        char buf[32];
        if (!v) return std::string("-");
        std::snprintf(buf, sizeof buf, "%.1f", *v * 100.0);
        return std::string(buf);
    };
    const std::size_t mw = std::max<std::size_t>(method.size(), 6) + 2;
    auto row = [&](const std::string& label, const std::array<std::string, 6>& cells) {
        std::string line = label + std::string(mw - label.size(), ' ');
        for (const auto& c : cells) line += c + std::string(c.size() < 8 ? 8 - c.size() : 1, ' ');
        while (!line.empty() && line.back() == ' ') line.pop_back();
        return line + "\n";
    };
    std::string out;
    out += row("", {"Overall", "", "Base", "", "Novel", ""});
    out += row("Method", {"AP", "AP50", "AP", "AP50", "AP", "AP50"});
    const std::optional<SplitMetrics> novel = report.novel;
    out += row(method, {cell(report.overall.ap), cell(report.overall.ap50), cell(report.base.ap),
                        cell(report.base.ap50), novel ? cell(novel->ap) : cell(std::nullopt),
                        novel ? cell(novel->ap50) : cell(std::nullopt)});
    return out;
}

std::vector<GroundTruth> ground_truths_from(const AnnotationSet& set) {
    std::vector<GroundTruth> out;
    for (const auto& a : set.annotations) out.push_back({a.image_id, a.category_id, rle_decode(a.segmentation)});
    return out;
}

std::vector<Prediction> predictions_from(const AnnotationSet& set) {
    std::vector<Prediction> out;
    for (const auto& a : set.annotations) {
        Instance inst;
        inst.mask = rle_decode(a.segmentation);
        inst.class_id = a.category_id;
        inst.score = a.score.value_or(0.0);
        inst.stability = a.stability.value_or(0.0);
        out.push_back({a.image_id, std::move(inst)});
    }
    return out;
}

Report mean_report(const std::vector<Report>& reports) {
    Report m;
    if (reports.empty()) return m;
    const double n = static_cast<double>(reports.size());
    std::size_t novel_count = 0;
    SplitMetrics novel_sum;
    std::map<int, std::pair<CategoryAp, std::size_t>> cats;
    for (const auto& r : reports) {
        m.overall.ap += r.overall.ap / n;
        m.overall.ap50 += r.overall.ap50 / n;
        m.overall.n_categories = std::max(m.overall.n_categories, r.overall.n_categories);
        m.base.ap += r.base.ap / n;
        m.base.ap50 += r.base.ap50 / n;
        m.base.n_categories = std::max(m.base.n_categories, r.base.n_categories);
        if (r.novel) {
            ++novel_count;
            novel_sum.ap += r.novel->ap;
            novel_sum.ap50 += r.novel->ap50;
            novel_sum.n_categories = std::max(novel_sum.n_categories, r.novel->n_categories);
        }
        for (const auto& c : r.categories) {
            auto& [acc, k] = cats[c.category_id];
            acc.category_id = c.category_id;
            acc.n_gt = c.n_gt;
            acc.ap += c.ap;
            acc.ap50 += c.ap50;
            ++k;
        }
    }
    if (novel_count > 0) {
        novel_sum.ap /= static_cast<double>(novel_count);
        novel_sum.ap50 /= static_cast<double>(novel_count);
        m.novel = novel_sum;
    }
    for (auto& [id, entry] : cats) {
        auto [c, k] = entry;
        c.ap /= static_cast<double>(k);
        c.ap50 /= static_cast<double>(k);
        m.categories.push_back(c);
    }
    return m;
}

EpisodeResult run_fewshot_episodes(const ClassifierModel& base_model, const std::vector<EmbeddingBundle>& test_bundles,
                                   const std::vector<GroundTruth>& gts,
                                   const std::map<int, std::vector<Tensor>>& shot_pool, const InferenceConfig& cfg,
                                   std::size_t n_repeats, std::uint64_t seed, std::size_t shots_per_class) {
    if (n_repeats == 0) throw InvalidArgument("n_repeats must be at least 1");
    if (shots_per_class == 0) throw InvalidArgument("shots_per_class must be at least 1");
    std::vector<int> missing;
    for (int id : base_model.layout.novel_class_ids) {
        auto it = shot_pool.find(id);
        if (it == shot_pool.end() || it->second.empty()) missing.push_back(id);
    }
    if (!missing.empty()) {
        std::string msg = "no shots available for novel classes:";
        for (int id : missing) msg += " " + std::to_string(id);
        throw InvalidArgument(msg);
    }

    EpisodeResult result;
    for (std::size_t e = 0; e < n_repeats; ++e) {
        Rng rng(derive_seed(seed, e + 1));
        ClassifierModel model = base_model;
        std::map<int, std::size_t> chosen;
        for (int id : base_model.layout.novel_class_ids) {
            const auto& pool = shot_pool.at(id);
            ShotSet shots;
            shots.class_id = id;
            for (std::size_t s = 0; s < shots_per_class; ++s) {
                const std::size_t pick = rng.next_index(pool.size());
                if (s == 0) chosen[id] = pick;
                shots.embeddings.push_back(pool[pick]);
            }
            model = imprint_novel_class(model, shots);
        }
        std::vector<Prediction> preds;
        for (const auto& b : test_bundles)
            for (auto& inst : run_inference(b, model, cfg)) preds.push_back({b.image_id, std::move(inst)});
        result.episodes.push_back(evaluate_split(preds, gts, model.layout));
        result.chosen_shots.push_back(std::move(chosen));
        for (int id : base_model.layout.novel_class_ids) model = remove_novel_class(model, id);
    }
    result.mean = mean_report(result.episodes);
    return result;
}

} // namespace samif
