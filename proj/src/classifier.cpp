#include "samif/classifier.hpp"

#include "samif/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

namespace samif {

// ---------------------------------------------------------------------------
// ClassLayout

ClassLayout::ClassLayout(std::vector<int> base_ids, std::vector<int> novel_ids)
    : base_class_ids(std::move(base_ids)), novel_class_ids(std::move(novel_ids)) {
    active.assign(total_classes(), true);
    for (std::size_t r = first_novel_row(); r < active.size(); ++r) active[r] = false;
    validate();
}

int ClassLayout::class_id(std::size_t row) const {
    if (row == 0) return kBackgroundId;
    if (row < first_novel_row()) return base_class_ids.at(row - 1);
    return novel_class_ids.at(row - first_novel_row());
}

std::optional<std::size_t> ClassLayout::row_of(int id) const {
    if (id == kBackgroundId) return 0;
    for (std::size_t i = 0; i < base_class_ids.size(); ++i)
        if (base_class_ids[i] == id) return 1 + i;
    for (std::size_t i = 0; i < novel_class_ids.size(); ++i)
        if (novel_class_ids[i] == id) return first_novel_row() + i;
    return std::nullopt;
}

bool ClassLayout::is_base(int id) const {
    return std::find(base_class_ids.begin(), base_class_ids.end(), id) != base_class_ids.end();
}

bool ClassLayout::is_novel(int id) const {
    return std::find(novel_class_ids.begin(), novel_class_ids.end(), id) != novel_class_ids.end();
}

std::vector<int> ClassLayout::active_novel_ids() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < novel_class_ids.size(); ++i)
        if (active.at(first_novel_row() + i)) out.push_back(novel_class_ids[i]);
    return out;
}

void ClassLayout::validate() const {
    std::set<int> seen{kBackgroundId};
    for (int id : base_class_ids)
        if (!seen.insert(id).second) throw InvalidArgument("duplicate or reserved class id " + std::to_string(id));
    for (int id : novel_class_ids)
        if (!seen.insert(id).second) throw InvalidArgument("duplicate or reserved class id " + std::to_string(id));
    if (active.size() != total_classes()) throw InvalidArgument("layout active flags do not match class count");
    for (std::size_t r = 0; r < first_novel_row(); ++r)
        if (!active[r]) throw InvalidArgument("background and base rows must be active");
}

// ---------------------------------------------------------------------------
// Parameters

const std::array<const char*, ClassifierParams::kCount>& ClassifierParams::names() {
    static const std::array<const char*, kCount> n = {"conv1_w", "conv1_b", "conv2_w", "conv2_b",
                                                      "fc_w",    "fc_b",    "cos_w"};
    return n;
}

std::array<Tensor*, ClassifierParams::kCount> ClassifierParams::tensors() {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc_w, &fc_b, &cos_w};
}

std::array<const Tensor*, ClassifierParams::kCount> ClassifierParams::tensors() const {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc_w, &fc_b, &cos_w};
}

ClassifierParams ClassifierParams::zeros_like(const ClassifierParams& p) {
    ClassifierParams z;
    auto dst = z.tensors();
    auto src = p.tensors();
    for (std::size_t i = 0; i < kCount; ++i) *dst[i] = Tensor(src[i]->shape());
    return z;
}

ClassifierModel make_model(const ClassifierDims& dims, const ClassLayout& layout, double gamma) {
    layout.validate();
    if (dims.c_in == 0 || dims.c_mid == 0 || dims.feature_dim == 0) throw InvalidArgument("model dimensions must be positive");
    if (!(gamma > 0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be positive");
    ClassifierModel m;
    m.dims = dims;
    m.gamma = gamma;
    m.layout = layout;
    auto& p = m.params;
    p.conv1_w = Tensor({dims.c_mid, dims.c_in, 3, 3});
    p.conv1_b = Tensor({dims.c_mid});
    p.conv2_w = Tensor({dims.c_mid, dims.c_mid, 3, 3});
    p.conv2_b = Tensor({dims.c_mid});
    p.fc_w = Tensor({dims.feature_dim, dims.c_mid});
    p.fc_b = Tensor({dims.feature_dim});
    p.cos_w = Tensor({layout.total_classes(), dims.feature_dim});
    return m;
}

ClassifierModel init_model(const ClassifierDims& dims, const ClassLayout& layout, double gamma, std::uint64_t seed) {
    ClassifierModel m = make_model(dims, layout, gamma);
    Rng rng(seed);
    auto he_uniform = [&rng](Tensor& t, std::size_t fan_in) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (auto& v : t.values()) v = (2.0 * rng.next_uniform() - 1.0) * bound;
    };
    he_uniform(m.params.conv1_w, dims.c_in * 9);
    he_uniform(m.params.conv2_w, dims.c_mid * 9);
    he_uniform(m.params.fc_w, dims.c_mid);
    for (std::size_t r = 0; r < layout.first_novel_row(); ++r) {
        auto row = m.params.cos_w.row(r);
        for (auto& v : row) v = rng.next_normal();
        auto unit = l2_normalize(row);
        std::copy(unit.begin(), unit.end(), row.begin());
    }
    return m;
}

void ClassifierModel::validate() const {
    layout.validate();
    if (!(gamma > 0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be positive");
    const ClassifierModel ref = make_model(dims, layout, gamma);
    auto mine = params.tensors();
    auto want = ref.params.tensors();
    for (std::size_t i = 0; i < ClassifierParams::kCount; ++i) {
        if (mine[i]->shape() != want[i]->shape())
            throw InvalidArgument(std::string("parameter shape mismatch: ") + ClassifierParams::names()[i]);
        if (!mine[i]->all_finite())
            throw InvalidArgument(std::string("non-finite parameter: ") + ClassifierParams::names()[i]);
    }
    for (std::size_t r = 0; r < layout.total_classes(); ++r) {
        if (layout.active[r]) continue;
        for (double v : params.cos_w.row(r))
            if (v != 0.0) throw InvalidArgument("inactive class row is not zero");
    }
}

// ---------------------------------------------------------------------------
// Forward

namespace {

// 3x3 convolution, stride 1, zero padding 1. weights: co x ci x 3 x 3.
Tensor conv3x3(const Tensor& in, const Tensor& weights, const Tensor& bias) {
    const std::size_t ci_n = in.extent(0), h = in.extent(1), w = in.extent(2);
    const std::size_t co_n = weights.extent(0);
    Tensor out({co_n, h, w});
    for (std::size_t co = 0; co < co_n; ++co) {
        double* o = &out.at(co, 0, 0);
        std::fill(o, o + h * w, bias[co]);
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
            const double* src = in.values().data() + ci * h * w;
            const double* k = weights.values().data() + (co * ci_n + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double kv = k[ky * 3 + kx];
                    const std::ptrdiff_t dy = ky - 1, dx = kx - 1;
                    const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
                    const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? w - 1 : w;
                    for (std::size_t y = y0; y < y1; ++y) {
                        const double* srow = src + (y + dy) * w;
                        double* orow = o + y * w;
                        for (std::size_t x = x0; x < x1; ++x) orow[x] += kv * srow[x + dx];
                    }
                }
            }
        }
    }
    return out;
}

// Accumulates weight/bias gradients; fills `d_in` when non-null.
void conv3x3_backward(const Tensor& in, const Tensor& weights, const Tensor& d_out, Tensor& d_w, Tensor& d_b,
                      Tensor* d_in) {
    const std::size_t ci_n = in.extent(0), h = in.extent(1), w = in.extent(2);
    const std::size_t co_n = weights.extent(0);
    for (std::size_t co = 0; co < co_n; ++co) {
        const double* g = d_out.values().data() + co * h * w;
        d_b[co] += std::accumulate(g, g + h * w, 0.0);
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
            const double* src = in.values().data() + ci * h * w;
            const double* k = weights.values().data() + (co * ci_n + ci) * 9;
            double* dk = &d_w[(co * ci_n + ci) * 9];
            double* dsrc = d_in ? &d_in->at(ci, 0, 0) : nullptr;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const std::ptrdiff_t dy = ky - 1, dx = kx - 1;
                    const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
                    const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? w - 1 : w;
                    const double kv = k[ky * 3 + kx];
                    double acc = 0.0;
                    for (std::size_t y = y0; y < y1; ++y) {
                        const double* srow = src + (y + dy) * w;
                        const double* grow = g + y * w;
                        for (std::size_t x = x0; x < x1; ++x) acc += srow[x + dx] * grow[x];
                        if (dsrc) {
                            double* drow = dsrc + (y + dy) * w;
                            for (std::size_t x = x0; x < x1; ++x) drow[x + dx] += kv * grow[x];
                        }
                    }
                    dk[ky * 3 + kx] += acc;
                }
            }
        }
    }
}

void relu_inplace(Tensor& t) {
    for (auto& v : t.values()) v = v > 0.0 ? v : 0.0;
}

void check_input(const ClassifierModel& model, const Tensor& x) {
    if (x.rank() != 3 || x.extent(0) != model.dims.c_in)
        throw InvalidArgument("input shape mismatch");
    if (x.extent(1) < 3 || x.extent(2) < 3) throw InvalidArgument("input shape mismatch: spatial extent below 3");
}

} // namespace

FeatureTrace feature_extract_traced(const ClassifierModel& model, const Tensor& x) {
    check_input(model, x);
    const auto& p = model.params;
    FeatureTrace t;
    t.hidden1 = conv3x3(x, p.conv1_w, p.conv1_b);
    relu_inplace(t.hidden1);
    t.hidden2 = conv3x3(t.hidden1, p.conv2_w, p.conv2_b);
    relu_inplace(t.hidden2);

    const std::size_t c_mid = model.dims.c_mid;
    const std::size_t hw = x.extent(1) * x.extent(2);
    t.pooled.assign(c_mid, 0.0);
    for (std::size_t c = 0; c < c_mid; ++c) {
        const double* h2 = t.hidden2.values().data() + c * hw;
        t.pooled[c] = std::accumulate(h2, h2 + hw, 0.0) / static_cast<double>(hw);
    }
    const std::size_t d = model.dims.feature_dim;
    t.feature.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) t.feature[i] = p.fc_b[i] + dot(p.fc_w.row(i), t.pooled);
    return t;
}

std::vector<double> feature_extract(const ClassifierModel& model, const Tensor& x) {
    return feature_extract_traced(model, x).feature;
}

std::vector<double> cosine_scores(const ClassifierModel& model, std::span<const double> feature) {
    if (feature.size() != model.dims.feature_dim) throw InvalidArgument("feature dimension mismatch");
    const double fn = l2_norm(feature);
    if (!(fn > kNormEpsilon)) throw InvalidArgument("zero-norm feature vector");
    const std::size_t n = model.num_classes();
    std::vector<double> y(n, -std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < n; ++c) {
        if (!model.layout.active[c]) continue;
        const auto row = model.params.cos_w.row(c);
        const double wn = l2_norm(row);
        if (!(wn > kNormEpsilon)) throw InvalidArgument("uninitialized class row");
        y[c] = model.gamma * dot(feature, row) / (fn * wn);
    }
    return y;
}

ForwardResult classifier_forward(const ClassifierModel& model, const Tensor& x) {
    ForwardResult r;
    r.feature = feature_extract(model, x);
    r.scores = cosine_scores(model, r.feature);
    return r;
}

std::size_t argmax_row(std::span<const double> scores) {
    if (scores.empty()) throw InvalidArgument("argmax of empty score vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

// ---------------------------------------------------------------------------
// Backward

double classifier_loss(const ClassifierModel& model, const Tensor& x, std::size_t label_row) {
    auto r = classifier_forward(model, x);
    return softmax_cross_entropy(r.scores, label_row).loss;
}

BackwardResult classifier_backward(const ClassifierModel& model, const Tensor& x, std::size_t label_row) {
    if (label_row >= model.num_classes() || !model.layout.active[label_row])
        throw InvalidArgument("label refers to an inactive class row");
    const auto& p = model.params;
    const FeatureTrace t = feature_extract_traced(model, x);
    const std::vector<double> scores = cosine_scores(model, t.feature);
    const LossAndGrad sce = softmax_cross_entropy(scores, label_row);

    BackwardResult out;
    out.loss = sce.loss;
    out.grads = ClassifierParams::zeros_like(p);
    auto& g = out.grads;

    const std::size_t d = model.dims.feature_dim;
    const double fn = l2_norm(t.feature);
    std::vector<double> u(d);
    for (std::size_t i = 0; i < d; ++i) u[i] = t.feature[i] / fn;

    // Cosine head: y_c = gamma * u . v_c with u = f/|f| and v_c = W_c/|W_c|.
    std::vector<double> d_u(d, 0.0);
    for (std::size_t c = 0; c < model.num_classes(); ++c) {
        if (!model.layout.active[c]) continue;
        const double gc = sce.grad[c];
        const auto row = p.cos_w.row(c);
        const double wn = l2_norm(row);
        const double uv = dot(u, row) / wn;
        auto grow = g.cos_w.row(c);
        for (std::size_t i = 0; i < d; ++i) {
            const double v = row[i] / wn;
            d_u[i] += model.gamma * gc * v;
            grow[i] = model.gamma * gc * (u[i] - v * uv) / wn;
        }
    }
    const double u_du = dot(u, d_u);
    std::vector<double> d_f(d);
    for (std::size_t i = 0; i < d; ++i) d_f[i] = (d_u[i] - u[i] * u_du) / fn;

    // Fully connected.
    const std::size_t c_mid = model.dims.c_mid;
    std::vector<double> d_pooled(c_mid, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        g.fc_b[i] = d_f[i];
        auto wrow = p.fc_w.row(i);
        auto grow = g.fc_w.row(i);
        for (std::size_t j = 0; j < c_mid; ++j) {
            grow[j] = d_f[i] * t.pooled[j];
            d_pooled[j] += wrow[j] * d_f[i];
        }
    }

    // Mean pool and second ReLU.
    const std::size_t h = x.extent(1), w = x.extent(2), hw = h * w;
    Tensor d_z2({c_mid, h, w});
    for (std::size_t c = 0; c < c_mid; ++c) {
        const double gv = d_pooled[c] / static_cast<double>(hw);
        const double* a = t.hidden2.values().data() + c * hw;
        double* dz = &d_z2.at(c, 0, 0);
        for (std::size_t k = 0; k < hw; ++k) dz[k] = a[k] > 0.0 ? gv : 0.0;
    }

    Tensor d_h1({c_mid, h, w});
    conv3x3_backward(t.hidden1, p.conv2_w, d_z2, g.conv2_w, g.conv2_b, &d_h1);
    for (std::size_t k = 0; k < d_h1.size(); ++k)
        if (!(t.hidden1[k] > 0.0)) d_h1[k] = 0.0;
    conv3x3_backward(x, p.conv1_w, d_h1, g.conv1_w, g.conv1_b, nullptr);
    return out;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be positive");
    if (point_batch < 1) throw InvalidArgument("point_batch must be at least 1");
    if (!(gamma > 0)) throw InvalidArgument("gamma must be positive");
}

ClassifierModel train_classifier(std::span<const TrainingSample> samples, const ClassLayout& layout,
                                 const TrainConfig& cfg) {
    cfg.validate();
    std::vector<std::size_t> rows;
    rows.reserve(samples.size());
    std::vector<std::size_t> per_row(layout.total_classes(), 0);
    for (const auto& s : samples) {
        if (layout.is_novel(s.class_id)) throw InvalidArgument("novel labels forbidden in base training");
        auto r = layout.row_of(s.class_id);
        if (!r) throw InvalidArgument("unknown class id " + std::to_string(s.class_id) + " in training data");
        rows.push_back(*r);
        ++per_row[*r];
    }
    for (std::size_t r = 1; r < layout.first_novel_row(); ++r)
        if (per_row[r] == 0)
            throw InvalidArgument("no training sample for base class " + std::to_string(layout.class_id(r)));

    ClassLayout base_layout = layout;
    for (std::size_t r = base_layout.first_novel_row(); r < base_layout.total_classes(); ++r)
        base_layout.active[r] = false;
    ClassifierModel model = init_model(cfg.dims, base_layout, cfg.gamma, cfg.seed);
    Rng rng(derive_seed(cfg.seed, 1));

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.point_batch) {
            const std::size_t end = std::min(order.size(), start + cfg.point_batch);
            ClassifierParams acc = ClassifierParams::zeros_like(model.params);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                BackwardResult br = classifier_backward(model, samples[idx].input, rows[idx]);
                loss_sum += br.loss;
                auto dst = acc.tensors();
                auto src = br.grads.tensors();
                for (std::size_t t = 0; t < ClassifierParams::kCount; ++t)
                    for (std::size_t i = 0; i < dst[t]->size(); ++i) (*dst[t])[i] += (*src[t])[i];
            }
            const double step = cfg.learning_rate / static_cast<double>(end - start);
            auto params = model.params.tensors();
            auto grads = acc.tensors();
            for (std::size_t t = 0; t < ClassifierParams::kCount; ++t)
                for (std::size_t i = 0; i < params[t]->size(); ++i) (*params[t])[i] -= step * (*grads[t])[i];
        }
        model.epoch_losses.push_back(samples.empty() ? 0.0 : loss_sum / static_cast<double>(samples.size()));
    }
    if (!model.params.cos_w.all_finite()) throw Error("training diverged: non-finite parameters");
    return model;
}

} // namespace samif
