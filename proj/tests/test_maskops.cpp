#include "doctest.h"

#include "oracles.hpp"

#include "samif/error.hpp"
#include "samif/maskops.hpp"

#include <algorithm>
#include <set>

using namespace samif;

namespace {

MaskGrid full(std::size_t h, std::size_t w) {
    return MaskGrid(h, w, std::vector<std::uint8_t>(h * w, 1));
}

Instance inst(MaskGrid m, double score) {
    Instance i;
    i.mask = std::move(m);
    i.score = score;
    i.class_id = 1;
    return i;
}

} // namespace

TEST_CASE("binarize is strict") {
    LogitGrid g(1, 3);
    g.values = {-1.0, 0.0, 0.5};
    const auto m = binarize(g, 0.0);
    CHECK(m.bits() == std::vector<std::uint8_t>{0, 0, 1});
}

TEST_CASE("nearest upsampling") {
    LogitGrid g(2, 2);
    g.values = {1, 2, 3, 4};
    const auto u = g.upsample_nearest(4, 4);
    CHECK(u.at(0, 0) == 1);
    CHECK(u.at(1, 1) == 1);
    CHECK(u.at(0, 3) == 2);
    CHECK(u.at(3, 0) == 3);
    CHECK(u.at(2, 2) == 4);
}

TEST_CASE("erosion examples") {
    CHECK(erode(MaskGrid(6, 7), StructuringElement::square(3)) == MaskGrid(6, 7));
    const auto e = erode(full(5, 5), StructuringElement::square(3));
    for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t x = 0; x < 5; ++x) CHECK(e.get(y, x) == (y >= 1 && y <= 3 && x >= 1 && x <= 3));
    CHECK_THROWS_AS(StructuringElement(2, 3), InvalidArgument);
}

TEST_CASE("erosion matches the brute-force definition") {
    Rng rng(100);
    for (int seed = 0; seed < 100; ++seed) {
        const auto m = oracle::random_mask(32, 32, 0.5 + 0.45 * rng.next_uniform(), rng);
        const std::size_t kh = 1 + 2 * rng.next_index(3), kw = 1 + 2 * rng.next_index(3);
        const auto got = erode(m, {kh, kw});
        REQUIRE(got == oracle::erode(m, static_cast<long>(kh), static_cast<long>(kw)));
        CHECK(got.subset_of(m));
    }
}

TEST_CASE("erosion with a 1x1 kernel is the identity") {
    Rng rng(101);
    for (int t = 0; t < 20; ++t) {
        const auto m = oracle::random_mask(9, 13, 0.5, rng);
        CHECK(erode(m, StructuringElement::square(1)) == m);
    }
}

TEST_CASE("RLE examples") {
    CHECK(rle_encode(full(2, 2)).counts == std::vector<std::uint32_t>{0, 4});
    MaskGrid one(2, 2);
    one.set(0, 1);
    CHECK(rle_encode(one).counts == std::vector<std::uint32_t>{2, 1, 1});
    CHECK(rle_encode(MaskGrid(3, 2)).counts == std::vector<std::uint32_t>{6});
}

TEST_CASE("RLE round trip and oracle agreement") {
    Rng rng(102);
    for (int t = 0; t < 200; ++t) {
        const auto m = oracle::random_mask(1 + rng.next_index(20), 1 + rng.next_index(20), rng.next_uniform(), rng);
        const auto r = rle_encode(m);
        CHECK(r.counts == oracle::rle(m));
        CHECK(rle_decode(r) == m);
    }
}

TEST_CASE("corrupt RLE is rejected") {
    try {
        rle_decode(std::vector<std::uint32_t>{1, 2}, 2, 2);
        FAIL("expected an error");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatErrorKind::CorruptRle);
        CHECK(std::string(e.what()).find("corrupt RLE") != std::string::npos);
    }
}

TEST_CASE("mask IoU") {
    MaskGrid a(2, 2), b(2, 2);
    a.set(0, 0);
    CHECK(mask_iou(a, a) == 1.0);
    b.set(1, 1);
    CHECK(mask_iou(a, b) == 0.0);
    const auto block = full(2, 2);
    MaskGrid half(2, 2);
    half.set(0, 0);
    half.set(0, 1);
    CHECK(mask_iou(block, half) == 0.5);
    CHECK_THROWS_WITH_AS(mask_iou(MaskGrid(2, 2), MaskGrid(2, 2)), doctest::Contains("undefined IoU"),
                         InvalidArgument);
    CHECK_THROWS_AS(mask_iou(MaskGrid(2, 2), MaskGrid(2, 3)), InvalidArgument);
}

TEST_CASE("stability score examples") {
    const double tau = 0.3, delta = 0.5;
    CHECK(stability_score(LogitGrid(4, 4, tau + 10 * delta), tau, delta) == 1.0);
    LogitGrid half(4, 4, tau);
    for (std::size_t i = 0; i < 8; ++i) half.values[i] = tau + 10 * delta;
    CHECK(stability_score(half, tau, delta) == 0.5);
    CHECK(stability_score(LogitGrid(4, 4, tau), tau, delta) == 0.0);
}

TEST_CASE("stability score is bounded and monotone in delta") {
    Rng rng(103);
    for (int t = 0; t < 50; ++t) {
        LogitGrid g(8, 8);
        for (auto& v : g.values) v = 4.0 * rng.next_normal();
        double prev = 2.0;
        for (double delta : {0.1, 0.5, 1.0, 2.0, 4.0}) {
            const double s = stability_score(g, 0.0, delta);
            CHECK(s >= 0.0);
            CHECK(s <= 1.0);
            CHECK(s <= prev);
            prev = s;
        }
    }
}

TEST_CASE("NMS examples") {
    const auto m = full(4, 4);
    auto kept = nms({inst(m, 0.8), inst(m, 0.9)}, 0.7);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);

    MaskGrid a(4, 4), b(4, 4), c(4, 4);
    a.set(0, 0);
    b.set(1, 1);
    c.set(2, 2);
    const auto idx = nms_indices({inst(a, 0.2), inst(b, 0.7), inst(c, 0.5)}, 0.5);
    CHECK(idx == std::vector<std::size_t>{1, 2, 0});

    // Equal scores: the earlier instance wins.
    CHECK(nms_indices({inst(m, 0.5), inst(m, 0.5)}, 0.7) == std::vector<std::size_t>{0});
}

TEST_CASE("NMS matches the quadratic reference and its invariants") {
    Rng rng(104);
    for (int seed = 0; seed < 50; ++seed) {
        std::vector<Instance> in;
        for (int i = 0; i < 20; ++i) in.push_back(inst(oracle::random_box(16, 16, rng), rng.next_uniform()));
        const double thr = 0.3 + 0.5 * rng.next_uniform();
        const auto got = nms_indices(in, thr);
        REQUIRE(got == oracle::nms(in, thr));
        const auto kept = nms(in, thr);
        for (std::size_t i = 1; i < kept.size(); ++i) CHECK(kept[i].score <= kept[i - 1].score);
        for (std::size_t i = 0; i < kept.size(); ++i)
            for (std::size_t j = i + 1; j < kept.size(); ++j) CHECK(mask_iou(kept[i].mask, kept[j].mask) <= thr);
        CHECK(std::set<std::size_t>(got.begin(), got.end()).size() == got.size());
    }
}

TEST_CASE("sampling: a 1-pixel border frame vanishes under a 3x3 kernel") {
    // Instance covers everything but a 1-pixel frame. With a 3x3 kernel the
    // frame (background) erodes away, leaving the instance as the only target.
    MaskGrid body(20, 20);
    for (std::size_t y = 1; y < 19; ++y)
        for (std::size_t x = 1; x < 19; ++x) body.set(y, x);
    Rng rng(105);
    const auto pts = sample_training_points({body}, 20, 20, 500, StructuringElement::square(3), rng);
    for (const auto& p : pts) {
        CHECK(p.target == 0);
        CHECK(body.get(static_cast<std::size_t>(p.point.y), static_cast<std::size_t>(p.point.x)));
    }

    // With a 1x1 kernel the frame survives and is a target of its own.
    const auto pts1 = sample_training_points({body}, 20, 20, 500, StructuringElement::square(1), rng);
    for (const auto& p : pts1) {
        const bool inside = body.get(static_cast<std::size_t>(p.point.y), static_cast<std::size_t>(p.point.x));
        CHECK(inside == (p.target == 0));
    }
}

TEST_CASE("sampling: tiny instance is chosen about half the time") {
    MaskGrid tiny(64, 64);
    for (std::size_t y = 30; y < 35; ++y)
        for (std::size_t x = 30; x < 35; ++x) tiny.set(y, x);
    REQUIRE(erode(tiny, StructuringElement::square(3)).count() == 9);
    Rng rng(106);
    const auto pts = sample_training_points({tiny}, 64, 64, 10000, StructuringElement::square(3), rng);
    const auto hits = std::count_if(pts.begin(), pts.end(), [](const SampledPoint& p) { return p.target == 0; });
    const double freq = static_cast<double>(hits) / 10000.0;
    CHECK(freq > 0.47);
    CHECK(freq < 0.53);
}

TEST_CASE("sampled points lie inside their eroded target") {
    Rng rng(107);
    const auto k = StructuringElement::square(3);
    for (int seed = 0; seed < 100; ++seed) {
        std::vector<MaskGrid> masks;
        MaskGrid used(24, 24);
        for (int i = 0; i < 3; ++i) {
            auto b = oracle::random_box(24, 24, rng);
            MaskGrid clipped(24, 24);
            for (std::size_t p = 0; p < b.bits().size(); ++p)
                if (b.bits()[p] && !used.bits()[p]) clipped.set(p / 24, p % 24);
            for (std::size_t p = 0; p < b.bits().size(); ++p)
                if (clipped.bits()[p]) used.set(p / 24, p % 24);
            masks.push_back(clipped);
        }
        const auto bg = erode(used.inverted(), k);
        Rng srng(static_cast<std::uint64_t>(seed));
        const auto pts = sample_training_points(masks, 24, 24, 50, k, srng);
        for (const auto& p : pts) {
            const auto y = static_cast<std::size_t>(p.point.y), x = static_cast<std::size_t>(p.point.x);
            if (p.target == kBackgroundTarget) {
                CHECK(bg.get(y, x));
            } else {
                CHECK(erode(masks[static_cast<std::size_t>(p.target)], k).get(y, x));
            }
        }
    }
}

TEST_CASE("sampling with nothing to sample") {
    Rng rng(108);
    CHECK_THROWS_WITH_AS(sample_training_points({full(4, 4)}, 4, 4, 3, StructuringElement::square(5), rng),
                         "no sampleable region", InvalidArgument);
    CHECK_THROWS_AS(sample_training_points({}, 4, 4, 0, StructuringElement::square(1), rng), InvalidArgument);
}

TEST_CASE("grid points") {
    const auto one = grid_points(100, 100, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == PromptPoint{50, 50, true});

    const auto two = grid_points(4, 4, 2);
    const std::vector<PromptPoint> want{{1, 1, true}, {3, 1, true}, {1, 3, true}, {3, 3, true}};
    CHECK(two == want);

    Rng rng(109);
    for (int t = 0; t < 50; ++t) {
        const std::size_t h = 1 + rng.next_index(100), w = 1 + rng.next_index(100), n = 1 + rng.next_index(40);
        const auto pts = grid_points(h, w, n);
        CHECK(pts.size() == n * n);
        for (const auto& p : pts) {
            CHECK(p.x >= 0);
            CHECK(p.y >= 0);
            CHECK(static_cast<std::size_t>(p.x) < w);
            CHECK(static_cast<std::size_t>(p.y) < h);
        }
    }
}
