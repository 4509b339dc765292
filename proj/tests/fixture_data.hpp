#pragma once

// Small hand-made objects behind the golden files in fixtures/. The golden
// files are regenerated with the make_fixtures target; tests compare the
// encoder's current output against them byte for byte.

#include "samif/bundleio.hpp"
#include "samif/classifier.hpp"

namespace fixtures {

inline samif::EmbeddingBundle bundle() {
    samif::EmbeddingBundle b;
    b.image_id = 7;
    b.height = 4;
    b.width = 6;
    b.c_in = 2;
    b.embed_h = 2;
    b.embed_w = 2;
    b.logit_h = 2;
    b.logit_w = 3;
    b.provenance = "synthetic";
    b.provenance_note = "golden fixture";
    for (int r = 0; r < 2; ++r) {
        samif::PointRecord rec;
        rec.point = {1 + 3 * r, 1 + 2 * r, true};
        rec.logits = samif::LogitGrid(2, 3);
        for (std::size_t i = 0; i < 6; ++i) rec.logits.values[i] = (r == 0 ? 1.0 : -1.0) * (0.5 * static_cast<double>(i) - 1.0);
        rec.embedding = samif::Tensor({2, 2, 2});
        for (std::size_t i = 0; i < 8; ++i) rec.embedding[i] = 0.25 * static_cast<double>(i) - static_cast<double>(r);
        b.records.push_back(rec);
    }
    return b;
}

inline samif::ClassifierModel model() {
    samif::ClassLayout layout({3, 5}, {8});
    auto m = samif::make_model({2, 2, 3}, layout, 7.0);
    double v = -1.0;
    for (auto* t : m.params.tensors())
        for (auto& x : t->values()) {
            x = v;
            v += 0.125;
        }
    for (auto& x : m.params.cos_w.row(3)) x = 0.0;
    m.epoch_losses = {1.5, 0.75};
    m.metadata["note"] = "golden fixture";
    return m;
}

inline samif::AnnotationSet annotations() {
    samif::AnnotationSet s;
    s.images = {{7, 4, 6}};
    s.categories = {{3, "class_3", "base"}, {5, "class_5", "base"}, {8, "class_8", "novel"}};
    samif::Annotation a;
    a.id = 1;
    a.image_id = 7;
    a.category_id = 3;
    a.segmentation = {4, 6, {5, 3, 16}};
    s.annotations.push_back(a);
    return s;
}

} // namespace fixtures
