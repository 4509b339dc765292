#pragma once

#include "samif/classifier.hpp"

#include <vector>

namespace samif {

/// The few-shot mask embeddings collected for one novel class.
struct ShotSet {
    int class_id = 0;
    std::vector<Tensor> embeddings; // each c_in x h x w

    std::size_t n_shots() const noexcept { return embeddings.size(); }
};

/// Imprints a novel class: the row for `shots.class_id` becomes the mean of the
/// unit-normalised shot features (not re-normalised) and is marked active.
/// Every other parameter is copied unchanged.
ClassifierModel imprint_novel_class(const ClassifierModel& model, const ShotSet& shots);

/// Zeroes an imprinted novel row and marks it inactive.
ClassifierModel remove_novel_class(const ClassifierModel& model, int class_id);

} // namespace samif
