#include "samif/incremental.hpp"

#include "samif/error.hpp"

#include <string>

namespace samif {

namespace {

std::size_t novel_row(const ClassifierModel& model, int class_id) {
    if (!model.layout.is_novel(class_id))
        throw InvalidArgument("class " + std::to_string(class_id) + " is not a novel slot");
    return *model.layout.row_of(class_id);
}

} // namespace

ClassifierModel imprint_novel_class(const ClassifierModel& model, const ShotSet& shots) {
    const std::size_t row = novel_row(model, shots.class_id);
    if (shots.n_shots() == 0) throw InvalidArgument("shot set is empty");

    const std::size_t d = model.dims.feature_dim;
    std::vector<double> sum(d, 0.0);
    for (const auto& emb : shots.embeddings) {
        const auto feature = feature_extract(model, emb);
        if (!(l2_norm(feature) > kNormEpsilon)) throw InvalidArgument("degenerate shot");
        const auto unit = l2_normalize(feature);
        for (std::size_t i = 0; i < d; ++i) sum[i] += unit[i];
    }

    ClassifierModel out = model;
    auto dst = out.params.cos_w.row(row);
    const auto n = static_cast<double>(shots.n_shots());
    for (std::size_t i = 0; i < d; ++i) dst[i] = sum[i] / n;
    if (!(l2_norm(dst) > kNormEpsilon)) throw InvalidArgument("degenerate shot: averaged row has zero norm");
    out.layout.active[row] = true;
    return out;
}

ClassifierModel remove_novel_class(const ClassifierModel& model, int class_id) {
    const std::size_t row = novel_row(model, class_id);
    if (!model.layout.active[row])
        throw InvalidArgument("class " + std::to_string(class_id) + " has not been imprinted");
    ClassifierModel out = model;
    for (auto& v : out.params.cos_w.row(row)) v = 0.0;
    out.layout.active[row] = false;
    return out;
}

} // namespace samif
