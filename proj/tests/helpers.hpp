#pragma once

#include "samif/classifier.hpp"
#include "samif/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace testutil {

inline samif::ClassLayout layout_of(int n_base, int n_novel) {
    std::vector<int> base(static_cast<std::size_t>(n_base)), novel(static_cast<std::size_t>(n_novel));
    std::iota(base.begin(), base.end(), 1);
    std::iota(novel.begin(), novel.end(), n_base + 1);
    return samif::ClassLayout(base, novel);
}

inline void fill_uniform(samif::Tensor& t, samif::Rng& rng, double scale) {
    for (auto& v : t.values()) v = scale * (2.0 * rng.next_uniform() - 1.0);
}

// Every parameter (biases included) drawn at random, so no gradient is trivially zero.
inline samif::ClassifierModel random_model(const samif::ClassifierDims& dims, const samif::ClassLayout& layout,
                                           samif::Rng& rng) {
    auto m = samif::make_model(dims, layout, 7.0);
    for (auto* t : m.params.tensors()) fill_uniform(*t, rng, 0.5);
    for (std::size_t r = 0; r < layout.total_classes(); ++r)
        if (!layout.active[r])
            for (auto& v : m.params.cos_w.row(r)) v = 0.0;
    return m;
}

inline samif::Tensor random_input(std::size_t c, std::size_t h, std::size_t w, samif::Rng& rng, double scale = 1.0) {
    samif::Tensor x({c, h, w});
    fill_uniform(x, rng, scale);
    return x;
}

// A model whose feature is exactly `f` for every input: constant activations
// of 1 feed an fc layer with zero weights and bias f.
inline samif::ClassifierModel constant_feature_model(const std::vector<double>& f, std::size_t n_classes_base,
                                                     std::size_t c_in = 2) {
    samif::ClassifierDims dims{c_in, 3, f.size()};
    auto m = samif::make_model(dims, layout_of(static_cast<int>(n_classes_base), 0), 7.0);
    m.params.conv1_b.fill(1.0);
    m.params.conv2_b.fill(1.0);
    for (std::size_t i = 0; i < f.size(); ++i) m.params.fc_b[i] = f[i];
    return m;
}

struct GradcheckResult {
    double max_rel_error = 0.0;
    // The parameter entry that attains it.
    double analytic = 0.0;
    double numeric = 0.0;
};

// Max over all parameters of |analytic - numeric| / max(|analytic|, |numeric|, floor),
// numeric being the central difference with step h.
inline GradcheckResult gradcheck(const samif::ClassifierModel& model, const samif::Tensor& x, std::size_t label_row,
                                 double h = 1e-5, double floor = 1e-6) {
    const auto analytic = samif::classifier_backward(model, x, label_row).grads;
    samif::ClassifierModel probe = model;
    auto params = probe.params.tensors();
    auto grads = analytic.tensors();
    GradcheckResult worst;
    for (std::size_t t = 0; t < samif::ClassifierParams::kCount; ++t) {
        for (std::size_t i = 0; i < params[t]->size(); ++i) {
            if (t == samif::ClassifierParams::kCount - 1 && !model.layout.active[i / model.dims.feature_dim]) continue;
            const double keep = (*params[t])[i];
            (*params[t])[i] = keep + h;
            const double up = samif::classifier_loss(probe, x, label_row);
            (*params[t])[i] = keep - h;
            const double down = samif::classifier_loss(probe, x, label_row);
            (*params[t])[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double a = (*grads[t])[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            if (rel > worst.max_rel_error) worst = {rel, a, numeric};
        }
    }
    return worst;
}

inline double gradcheck_max_rel_error(const samif::ClassifierModel& model, const samif::Tensor& x,
                                      std::size_t label_row) {
    return gradcheck(model, x, label_row).max_rel_error;
}

} // namespace testutil
