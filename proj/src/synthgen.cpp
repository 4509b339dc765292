#include "samif/synthgen.hpp"

#include "samif/error.hpp"
#include "samif/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>

namespace samif {

using nlohmann::json;

namespace {

std::string bundle_name(std::int64_t image_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%04lld.sifb", static_cast<long long>(image_id));
    return buf;
}

constexpr std::int64_t kTrainIdBase = 1000;
constexpr std::int64_t kTestIdBase = 2000;
constexpr std::int64_t kShotIdBase = 3000;

} // namespace

// ---------------------------------------------------------------------------
// Config

void SynthConfig::validate() const {
    auto need = [](bool ok, const char* msg) {
        if (!ok) throw InvalidArgument(std::string("synth config: ") + msg);
    };
    need(image_h >= 8 && image_w >= 8, "image must be at least 8x8");
    need(c_in >= 1 && embed_h >= 3 && embed_w >= 3, "embedding extents too small");
    need(n_base >= 1, "need at least one base class");
    need(min_objects >= 1 && min_objects <= max_objects, "object count range invalid");
    need(min_half_extent >= 1 && min_half_extent <= max_half_extent, "shape size range invalid");
    need(2 * max_half_extent + 1 <= std::min(image_h, image_w), "shapes do not fit in the image");
    need(prototype_max_cos > -1.0 && prototype_max_cos < 1.0, "prototype_max_cos must be in (-1, 1)");
    need(noise_sigma >= 0.0, "noise_sigma must be nonnegative");
    need(points_per_side >= 1 && train_points_per_image >= 1, "point counts must be positive");
    need(erosion_kernel % 2 == 1, "erosion kernel must be odd");
}

std::string SynthConfig::to_json() const {
    json j{{"image_h", image_h},
           {"image_w", image_w},
           {"c_in", c_in},
           {"embed_h", embed_h},
           {"embed_w", embed_w},
           {"n_base", n_base},
           {"n_novel", n_novel},
           {"min_objects", min_objects},
           {"max_objects", max_objects},
           {"min_half_extent", min_half_extent},
           {"max_half_extent", max_half_extent},
           {"prototype_max_cos", prototype_max_cos},
           {"noise_sigma", noise_sigma},
           {"n_train_images", n_train_images},
           {"n_test_images", n_test_images},
           {"shot_images_per_class", shot_images_per_class},
           {"train_points_per_image", train_points_per_image},
           {"points_per_side", points_per_side},
           {"erosion_kernel", erosion_kernel},
           {"noisy_logits", noisy_logits},
           {"seed", seed}};
    return j.dump(1) + "\n";
}

SynthConfig SynthConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(FormatErrorKind::BadHeader, std::string("invalid synth config JSON: ") + e.what());
    }
    if (!j.is_object()) throw FormatError(FormatErrorKind::BadHeader, "synth config must be a JSON object");
    SynthConfig c;
    const json defaults = json::parse(c.to_json());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!defaults.contains(it.key()))
            throw FormatError(FormatErrorKind::BadHeader, "unknown synth config field \"" + it.key() + "\"");
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("image_h", c.image_h);
        get("image_w", c.image_w);
        get("c_in", c.c_in);
        get("embed_h", c.embed_h);
        get("embed_w", c.embed_w);
        get("n_base", c.n_base);
        get("n_novel", c.n_novel);
        get("min_objects", c.min_objects);
        get("max_objects", c.max_objects);
        get("min_half_extent", c.min_half_extent);
        get("max_half_extent", c.max_half_extent);
        get("prototype_max_cos", c.prototype_max_cos);
        get("noise_sigma", c.noise_sigma);
        get("n_train_images", c.n_train_images);
        get("n_test_images", c.n_test_images);
        get("shot_images_per_class", c.shot_images_per_class);
        get("train_points_per_image", c.train_points_per_image);
        get("points_per_side", c.points_per_side);
        get("erosion_kernel", c.erosion_kernel);
        get("noisy_logits", c.noisy_logits);
        get("seed", c.seed);
    } catch (const json::exception& e) {
        throw FormatError(FormatErrorKind::BadHeader, std::string("synth config: ") + e.what());
    }
    c.validate();
    return c;
}

ClassLayout SynthConfig::layout() const {
    std::vector<int> base, novel;
    for (std::size_t i = 0; i < n_base; ++i) base.push_back(static_cast<int>(1 + i));
    for (std::size_t i = 0; i < n_novel; ++i) novel.push_back(static_cast<int>(1 + n_base + i));
    return ClassLayout(base, novel);
}

// ---------------------------------------------------------------------------
// Geometry

MaskGrid rasterize(const PlacedShape& s, std::size_t h, std::size_t w) {
    MaskGrid m(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = static_cast<double>(static_cast<int>(x) - s.cx);
            const double dy = static_cast<double>(static_cast<int>(y) - s.cy);
            bool inside;
            if (s.kind == ShapeKind::Rectangle) {
                inside = std::abs(dx) <= s.half_w && std::abs(dy) <= s.half_h;
            } else {
                const double u = dx / s.half_w, v = dy / s.half_h;
                inside = u * u + v * v <= 1.0;
            }
            if (inside) m.set(y, x);
        }
    }
    return m;
}

std::vector<PlacedShape> place_shapes(const SynthConfig& cfg, const std::vector<int>& class_pool, std::size_t n_objects,
                                      Rng& rng) {
    if (class_pool.empty()) throw InvalidArgument("place_shapes: empty class pool");
    std::vector<PlacedShape> shapes;
    MaskGrid occupied(cfg.image_h, cfg.image_w);
    const auto span = cfg.max_half_extent - cfg.min_half_extent + 1;
    for (std::size_t k = 0; k < n_objects; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            PlacedShape s;
            s.kind = rng.next_index(2) == 0 ? ShapeKind::Rectangle : ShapeKind::Ellipse;
            s.half_w = static_cast<int>(cfg.min_half_extent + rng.next_index(span));
            s.half_h = static_cast<int>(cfg.min_half_extent + rng.next_index(span));
            s.cx = s.half_w + static_cast<int>(rng.next_index(cfg.image_w - 2 * s.half_w));
            s.cy = s.half_h + static_cast<int>(rng.next_index(cfg.image_h - 2 * s.half_h));
            s.class_id = class_pool[rng.next_index(class_pool.size())];
            const MaskGrid m = rasterize(s, cfg.image_h, cfg.image_w);
            // Keep a one-pixel gap between shapes (8-neighbourhood).
            bool clash = false;
            for (std::size_t y = 0; y < cfg.image_h && !clash; ++y) {
                for (std::size_t x = 0; x < cfg.image_w && !clash; ++x) {
                    if (!m.get(y, x)) continue;
                    for (std::size_t ny = y ? y - 1 : 0; ny <= std::min(y + 1, cfg.image_h - 1) && !clash; ++ny)
                        for (std::size_t nx = x ? x - 1 : 0; nx <= std::min(x + 1, cfg.image_w - 1); ++nx)
                            if (occupied.get(ny, nx)) clash = true;
                }
            }
            if (clash) continue;
            for (std::size_t i = 0; i < m.bits().size(); ++i)
                if (m.bits()[i]) occupied.set(i / cfg.image_w, i % cfg.image_w);
            shapes.push_back(s);
            placed = true;
        }
        if (!placed) throw Error("scene too crowded");
    }
    return shapes;
}

// ---------------------------------------------------------------------------
// Embeddings and logits

std::vector<std::vector<double>> make_prototypes(const SynthConfig& cfg, Rng& rng) {
    const std::size_t n = 1 + cfg.n_base + cfg.n_novel;
    std::vector<std::vector<double>> protos;
    for (std::size_t k = 0; k < n; ++k) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 100000) throw Error("cannot satisfy prototype separation bound");
            std::vector<double> v(cfg.c_in);
            for (auto& x : v) x = rng.next_normal();
            if (!(l2_norm(v) > kNormEpsilon)) continue;
            v = l2_normalize(v);
            const bool ok = std::all_of(protos.begin(), protos.end(),
                                        [&](const std::vector<double>& p) { return dot(p, v) < cfg.prototype_max_cos; });
            if (ok) {
                protos.push_back(std::move(v));
                break;
            }
        }
    }
    return protos;
}

Tensor sample_embedding(std::span<const double> prototype, double sigma, std::size_t embed_h, std::size_t embed_w,
                        Rng& rng) {
    const std::size_t c_in = prototype.size();
    Tensor t({c_in, embed_h, embed_w});
    for (std::size_t c = 0; c < c_in; ++c) {
        const double v = prototype[c] + sigma * rng.next_normal();
        for (std::size_t i = 0; i < embed_h * embed_w; ++i) t[c * embed_h * embed_w + i] = v;
    }
    return t;
}

namespace {

// 4-connected distance to the nearest pixel with the opposite membership.
std::vector<int> boundary_distance(const MaskGrid& region) {
    const std::size_t h = region.height(), w = region.width();
    std::vector<int> dist(h * w, std::numeric_limits<int>::max());
    std::deque<std::size_t> queue;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const bool v = region.get(y, x);
            const bool edge = (y > 0 && region.get(y - 1, x) != v) || (y + 1 < h && region.get(y + 1, x) != v) ||
                              (x > 0 && region.get(y, x - 1) != v) || (x + 1 < w && region.get(y, x + 1) != v);
            if (edge) {
                dist[y * w + x] = 1;
                queue.push_back(y * w + x);
            }
        }
    }
    while (!queue.empty()) {
        const std::size_t p = queue.front();
        queue.pop_front();
        const std::size_t y = p / w, x = p % w;
        const bool v = region.get(y, x);
        auto visit = [&](std::size_t q) {
            if (region.bits()[q] == static_cast<std::uint8_t>(v) && dist[q] > dist[p] + 1) {
                dist[q] = dist[p] + 1;
                queue.push_back(q);
            }
        };
        if (y > 0) visit(p - w);
        if (y + 1 < h) visit(p + w);
        if (x > 0) visit(p - 1);
        if (x + 1 < w) visit(p + 1);
    }
    return dist;
}

} // namespace

LogitGrid region_logits(const MaskGrid& region, bool noisy) {
    LogitGrid g(region.height(), region.width());
    if (!noisy) {
        for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = region.bits()[i] ? 2.0 : -2.0;
        return g;
    }
    const auto dist = boundary_distance(region);
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        const double ramp = std::min(2.0, 0.5 * static_cast<double>(dist[i]));
        g.values[i] = region.bits()[i] ? ramp : -ramp;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Dataset

namespace {

struct SceneContext {
    const SynthConfig& cfg;
    const ClassLayout& layout;
    const std::vector<std::vector<double>>& protos;
};

const std::vector<double>& prototype_for(const SceneContext& ctx, int class_id) {
    return ctx.protos.at(*ctx.layout.row_of(class_id));
}

EmbeddingBundle empty_bundle(const SynthConfig& cfg, std::int64_t image_id) {
    EmbeddingBundle b;
    b.image_id = image_id;
    b.height = cfg.image_h;
    b.width = cfg.image_w;
    b.c_in = cfg.c_in;
    b.embed_h = cfg.embed_h;
    b.embed_w = cfg.embed_w;
    b.logit_h = cfg.image_h;
    b.logit_w = cfg.image_w;
    b.provenance = "synthetic";
    b.provenance_note = "prototype + gaussian noise, broadcast spatially";
    return b;
}

SynthScene make_scene(const SceneContext& ctx, std::int64_t image_id, const std::vector<int>& pool,
                      std::optional<int> forced_class, Rng& rng) {
    const auto& cfg = ctx.cfg;
    const std::size_t n = cfg.min_objects + rng.next_index(cfg.max_objects - cfg.min_objects + 1);
    SynthScene s;
    s.image_id = image_id;
    s.shapes = place_shapes(cfg, pool, n, rng);
    if (forced_class) s.shapes.front().class_id = *forced_class;
    for (const auto& sh : s.shapes) s.masks.push_back(rasterize(sh, cfg.image_h, cfg.image_w));
    return s;
}

MaskGrid background_of(const SynthScene& s, std::size_t h, std::size_t w) {
    MaskGrid u(h, w);
    for (const auto& m : s.masks)
        for (std::size_t i = 0; i < m.bits().size(); ++i)
            if (m.bits()[i]) u.set(i / w, i % w);
    return u.inverted();
}

// Records at instance-balanced sampled points; returns the class id of each.
std::vector<int> add_sampled_records(const SceneContext& ctx, const SynthScene& scene, EmbeddingBundle& b,
                                     std::size_t n_points, Rng& rng) {
    const auto& cfg = ctx.cfg;
    const MaskGrid bg = background_of(scene, cfg.image_h, cfg.image_w);
    const LogitGrid bg_logits = region_logits(bg, cfg.noisy_logits);
    const auto points = sample_training_points(scene.masks, cfg.image_h, cfg.image_w, n_points,
                                               StructuringElement::square(cfg.erosion_kernel), rng);
    std::vector<int> labels;
    for (const auto& sp : points) {
        const bool is_bg = sp.target == kBackgroundTarget;
        const int cls = is_bg ? ClassLayout::kBackgroundId : scene.shapes[sp.target].class_id;
        PointRecord r;
        r.point = sp.point;
        r.logits = is_bg ? bg_logits : region_logits(scene.masks[sp.target], cfg.noisy_logits);
        r.embedding = sample_embedding(prototype_for(ctx, cls), cfg.noise_sigma, cfg.embed_h, cfg.embed_w, rng);
        b.records.push_back(std::move(r));
        labels.push_back(cls);
    }
    return labels;
}

} // namespace

SynthDataset generate_dataset(const SynthConfig& cfg) {
    cfg.validate();
    SynthDataset ds;
    ds.config = cfg;
    ds.layout = cfg.layout();
    Rng proto_rng(derive_seed(cfg.seed, 0x70));
    ds.prototypes = make_prototypes(cfg, proto_rng);
    const SceneContext ctx{cfg, ds.layout, ds.prototypes};

    const std::vector<int>& base_pool = ds.layout.base_class_ids;
    std::vector<int> all_pool = base_pool;
    all_pool.insert(all_pool.end(), ds.layout.novel_class_ids.begin(), ds.layout.novel_class_ids.end());

    Rng train_rng(derive_seed(cfg.seed, 0x71));
    for (std::size_t i = 0; i < cfg.n_train_images; ++i) {
        const auto id = kTrainIdBase + static_cast<std::int64_t>(i);
        SynthScene scene = make_scene(ctx, id, base_pool, std::nullopt, train_rng);
        EmbeddingBundle b = empty_bundle(cfg, id);
        ds.train_labels.push_back(add_sampled_records(ctx, scene, b, cfg.train_points_per_image, train_rng));
        ds.train_bundles.push_back(std::move(b));
        ds.train_scenes.push_back(std::move(scene));
    }

    Rng test_rng(derive_seed(cfg.seed, 0x72));
    for (const auto& c : categories_from_layout(ds.layout)) ds.test_annotations.categories.push_back(c);
    std::int64_t ann_id = 1;
    const auto grid = grid_points(cfg.image_h, cfg.image_w, cfg.points_per_side);
    for (std::size_t i = 0; i < cfg.n_test_images; ++i) {
        const auto id = kTestIdBase + static_cast<std::int64_t>(i);
        SynthScene scene = make_scene(ctx, id, all_pool, std::nullopt, test_rng);
        EmbeddingBundle b = empty_bundle(cfg, id);
        const MaskGrid bg = background_of(scene, cfg.image_h, cfg.image_w);
        const LogitGrid bg_logits = region_logits(bg, cfg.noisy_logits);
        std::vector<LogitGrid> obj_logits;
        for (const auto& m : scene.masks) obj_logits.push_back(region_logits(m, cfg.noisy_logits));
        for (const auto& p : grid) {
            PointRecord r;
            r.point = p;
            int cls = ClassLayout::kBackgroundId;
            r.logits = bg_logits;
            for (std::size_t k = 0; k < scene.masks.size(); ++k) {
                if (scene.masks[k].get(static_cast<std::size_t>(p.y), static_cast<std::size_t>(p.x))) {
                    cls = scene.shapes[k].class_id;
                    r.logits = obj_logits[k];
                    break;
                }
            }
            r.embedding = sample_embedding(prototype_for(ctx, cls), cfg.noise_sigma, cfg.embed_h, cfg.embed_w, test_rng);
            b.records.push_back(std::move(r));
        }
        ds.test_annotations.images.push_back({id, cfg.image_h, cfg.image_w});
        for (std::size_t k = 0; k < scene.masks.size(); ++k) {
            Annotation a;
            a.id = ann_id++;
            a.image_id = id;
            a.category_id = scene.shapes[k].class_id;
            a.segmentation = rle_encode(scene.masks[k]);
            ds.test_annotations.annotations.push_back(std::move(a));
        }
        ds.test_bundles.push_back(std::move(b));
        ds.test_scenes.push_back(std::move(scene));
    }

    Rng shot_rng(derive_seed(cfg.seed, 0x73));
    std::int64_t shot_id = kShotIdBase;
    for (int novel : ds.layout.novel_class_ids) {
        for (std::size_t i = 0; i < cfg.shot_images_per_class; ++i) {
            const auto id = shot_id++;
            SynthScene scene = make_scene(ctx, id, base_pool, novel, shot_rng);
            EmbeddingBundle b = empty_bundle(cfg, id);
            // Sampled like a training image; every point on the novel object is a shot candidate.
            const auto labels = add_sampled_records(ctx, scene, b, cfg.train_points_per_image, shot_rng);
            for (std::size_t k = 0; k < labels.size(); ++k)
                if (labels[k] == novel) ds.shot_refs.push_back({novel, bundle_name(id), k});
            ds.shot_bundles.push_back(std::move(b));
        }
    }
    return ds;
}

std::vector<TrainingSample> SynthDataset::training_samples() const {
    std::vector<TrainingSample> out;
    for (std::size_t i = 0; i < train_bundles.size(); ++i)
        for (std::size_t k = 0; k < train_bundles[i].records.size(); ++k)
            out.push_back({train_bundles[i].records[k].embedding, train_labels[i][k]});
    return out;
}

std::map<int, std::vector<Tensor>> SynthDataset::shot_pool() const {
    std::map<std::string, const EmbeddingBundle*> by_name;
    for (const auto& b : shot_bundles) by_name[bundle_name(b.image_id)] = &b;
    std::map<int, std::vector<Tensor>> pool;
    for (const auto& ref : shot_refs) pool[ref.class_id].push_back(by_name.at(ref.bundle)->records.at(ref.point_index).embedding);
    return pool;
}

void write_dataset(const SynthDataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "train");
    fs::create_directories(dir / "test");
    fs::create_directories(dir / "shots");
    write_text_file(dir / "config.json", ds.config.to_json());
    write_layout(ds.layout, dir / "layout.json");
    write_text_file(dir / "prototypes.json", json{{"prototypes", ds.prototypes}}.dump(1) + "\n");

    TrainLabels labels;
    labels.layout = ds.layout;
    for (std::size_t i = 0; i < ds.train_bundles.size(); ++i) {
        const std::string name = bundle_name(ds.train_bundles[i].image_id);
        write_bundle(ds.train_bundles[i], dir / "train" / name);
        labels.images.push_back({name, ds.train_labels[i]});
    }
    write_train_labels(labels, dir / "train" / "labels.json");

    for (const auto& b : ds.test_bundles) write_bundle(b, dir / "test" / bundle_name(b.image_id));
    write_annotations(ds.test_annotations, dir / "test" / "annotations.json");

    for (const auto& b : ds.shot_bundles) write_bundle(b, dir / "shots" / bundle_name(b.image_id));
    write_shot_pool(ds.shot_refs, dir / "shots" / "shots.json");
}

} // namespace samif
