#include "cli.hpp"
#include "samif/bundleio.hpp"
#include "samif/classifier.hpp"
#include "samif/error.hpp"
#include "samif/evalkit.hpp"
#include "samif/incremental.hpp"
#include "samif/maskops.hpp"
#include "samif/pipeline.hpp"
#include "samif/synthgen.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace samif;

namespace {

using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

MaskGrid to_mask(const MaskArray& a) {
    if (a.ndim() != 2) throw InvalidArgument("mask must be 2-D");
    const auto h = static_cast<std::size_t>(a.shape(0)), w = static_cast<std::size_t>(a.shape(1));
    std::vector<std::uint8_t> bits(a.data(), a.data() + h * w);
    for (auto& b : bits) b = b != 0 ? 1 : 0;
    return MaskGrid(h, w, std::move(bits));
}

MaskArray from_mask(const MaskGrid& m) {
    MaskArray out({m.height(), m.width()});
    std::copy(m.bits().begin(), m.bits().end(), out.mutable_data());
    return out;
}

LogitGrid to_logits(const RealArray& a) {
    if (a.ndim() != 2) throw InvalidArgument("logits must be 2-D");
    LogitGrid g(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + g.values.size(), g.values.begin());
    return g;
}

Tensor to_tensor(const RealArray& a) {
    std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

RealArray from_tensor(const Tensor& t) {
    RealArray out(t.shape());
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

py::dict split_dict(const SplitMetrics& s) {
    py::dict d;
    d["ap"] = s.ap;
    d["ap50"] = s.ap50;
    d["n_categories"] = s.n_categories;
    return d;
}

py::dict report_dict(const Report& r) {
    py::dict d;
    d["overall"] = split_dict(r.overall);
    d["base"] = split_dict(r.base);
    d["novel"] = r.novel ? py::object(split_dict(*r.novel)) : py::none();
    return d;
}

} // namespace

PYBIND11_MODULE(_samif, m) {
    m.doc() = "Bindings for the samif few-shot instance segmentation toolkit";

    auto base_err = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", base_err.ptr());
    py::register_exception<FormatError>(m, "FormatError", base_err.ptr());

    py::class_<Rng>(m, "Rng")
        .def(py::init<std::uint64_t>(), py::arg("seed"))
        .def("next_u64", &Rng::next_u64)
        .def("next_uniform", &Rng::next_uniform)
        .def("next_normal", &Rng::next_normal)
        .def("next_index", &Rng::next_index, py::arg("n"));
    m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("salt"));

    m.def(
        "erode", [](const MaskArray& mask, std::size_t kh, std::size_t kw) { return from_mask(erode(to_mask(mask), {kh, kw})); },
        py::arg("mask"), py::arg("kernel_h") = 3, py::arg("kernel_w") = 3);
    m.def(
        "rle_encode",
        [](const MaskArray& mask) { return rle_encode(to_mask(mask)).counts; }, py::arg("mask"));
    m.def(
        "rle_decode",
        [](const std::vector<std::uint32_t>& counts, std::size_t h, std::size_t w) {
            return from_mask(rle_decode(counts, h, w));
        },
        py::arg("counts"), py::arg("height"), py::arg("width"));
    m.def(
        "mask_iou", [](const MaskArray& a, const MaskArray& b) { return mask_iou(to_mask(a), to_mask(b)); },
        py::arg("a"), py::arg("b"));
    m.def(
        "stability_score",
        [](const RealArray& logits, double tau, double delta) { return stability_score(to_logits(logits), tau, delta); },
        py::arg("logits"), py::arg("tau") = 0.0, py::arg("delta") = 1.0);
    m.def(
        "nms",
        [](const std::vector<MaskArray>& masks, const std::vector<double>& scores, double iou_thresh) {
            if (masks.size() != scores.size()) throw InvalidArgument("masks and scores differ in length");
            std::vector<Instance> in(masks.size());
            for (std::size_t i = 0; i < in.size(); ++i) {
                in[i].mask = to_mask(masks[i]);
                in[i].score = scores[i];
            }
            return nms_indices(in, iou_thresh);
        },
        py::arg("masks"), py::arg("scores"), py::arg("iou_thresh") = 0.7);
    m.def(
        "grid_points",
        [](std::size_t h, std::size_t w, std::size_t n) {
            std::vector<std::pair<int, int>> out;
            for (const auto& p : grid_points(h, w, n)) out.emplace_back(p.x, p.y);
            return out;
        },
        py::arg("height"), py::arg("width"), py::arg("points_per_side"));

    py::class_<ClassifierModel>(m, "Model")
        .def_property_readonly("gamma", [](const ClassifierModel& x) { return x.gamma; })
        .def_property_readonly("num_classes", &ClassifierModel::num_classes)
        .def_property_readonly("base_class_ids", [](const ClassifierModel& x) { return x.layout.base_class_ids; })
        .def_property_readonly("novel_class_ids", [](const ClassifierModel& x) { return x.layout.novel_class_ids; })
        .def_property_readonly("active_novel_ids", [](const ClassifierModel& x) { return x.layout.active_novel_ids(); })
        .def_property_readonly("epoch_losses", [](const ClassifierModel& x) { return x.epoch_losses; })
        .def("feature", [](const ClassifierModel& x, const RealArray& e) { return feature_extract(x, to_tensor(e)); })
        .def("scores",
             [](const ClassifierModel& x, const std::vector<double>& f) { return cosine_scores(x, f); })
        .def("predict",
             [](const ClassifierModel& x, const RealArray& e) {
                 const auto row = argmax_row(cosine_scores(x, feature_extract(x, to_tensor(e))));
                 return x.layout.class_id(row);
             })
        .def("imprint",
             [](const ClassifierModel& x, int class_id, const std::vector<RealArray>& shots) {
                 ShotSet s{class_id, {}};
                 for (const auto& a : shots) s.embeddings.push_back(to_tensor(a));
                 return imprint_novel_class(x, s);
             })
        .def("remove", &remove_novel_class, py::arg("class_id"))
        .def("save", [](const ClassifierModel& x, const std::filesystem::path& p) { write_model(x, p); })
        .def("__eq__", [](const ClassifierModel& a, const ClassifierModel& b) { return a == b; });
    m.def("load_model", &read_model, py::arg("path"));

    py::class_<EmbeddingBundle>(m, "Bundle")
        .def_readonly("image_id", &EmbeddingBundle::image_id)
        .def_readonly("height", &EmbeddingBundle::height)
        .def_readonly("width", &EmbeddingBundle::width)
        .def_property_readonly("n_points", [](const EmbeddingBundle& b) { return b.records.size(); })
        .def("embedding", [](const EmbeddingBundle& b, std::size_t i) { return from_tensor(b.records.at(i).embedding); })
        .def("point", [](const EmbeddingBundle& b, std::size_t i) {
            const auto& p = b.records.at(i).point;
            return std::make_pair(p.x, p.y);
        });
    m.def("load_bundle", &read_bundle, py::arg("path"));

    m.def(
        "infer",
        [](const EmbeddingBundle& b, const ClassifierModel& model, double stability_thresh, double nms_iou) {
            InferenceConfig cfg;
            cfg.stability_thresh = stability_thresh;
            cfg.nms_iou = nms_iou;
            py::list out;
            for (const auto& inst : run_inference(b, model, cfg)) {
                py::dict d;
                d["class_id"] = inst.class_id;
                d["score"] = inst.score;
                d["stability"] = inst.stability;
                d["mask"] = from_mask(inst.mask);
                out.append(d);
            }
            return out;
        },
        py::arg("bundle"), py::arg("model"), py::arg("stability_thresh") = 0.95, py::arg("nms_iou") = 0.7);

    m.def(
        "evaluate",
        [](const std::filesystem::path& preds, const std::filesystem::path& ann, const std::filesystem::path& layout) {
            return report_dict(evaluate_split(predictions_from(read_annotations(preds)),
                                              ground_truths_from(read_annotations(ann)), read_layout(layout)));
        },
        py::arg("preds"), py::arg("annotations"), py::arg("layout"));

    m.def(
        "synth",
        [](const std::filesystem::path& out, std::uint64_t seed, const std::string& config_json) {
            auto cfg = SynthConfig::from_json(config_json);
            cfg.seed = seed;
            write_dataset(generate_dataset(cfg), out);
        },
        py::arg("out"), py::arg("seed") = 0, py::arg("config_json") = "{}");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
