#include "cli.hpp"

#include "samif/bundleio.hpp"
#include "samif/classifier.hpp"
#include "samif/error.hpp"
#include "samif/evalkit.hpp"
#include "samif/incremental.hpp"
#include "samif/pipeline.hpp"
#include "samif/synthgen.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <ostream>

namespace samif::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw FormatError(FormatErrorKind::Io, "not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

void require_file(const fs::path& p) {
    if (!fs::exists(p)) throw FormatError(FormatErrorKind::Io, "no such file: " + p.string());
}

struct SynthArgs {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
};

int do_synth(const SynthArgs& a, std::ostream& out) {
    SynthConfig cfg;
    if (!a.config.empty()) {
        require_file(a.config);
        cfg = SynthConfig::from_json(read_text_file(a.config));
    }
    cfg.seed = a.seed;
    const SynthDataset ds = generate_dataset(cfg);
    write_dataset(ds, a.out);
    out << "synth: wrote " << ds.train_bundles.size() << " train, " << ds.test_bundles.size() << " test, "
        << ds.shot_bundles.size() << " shot bundles to " << a.out << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string bundles;
    std::string labels;
    std::string out;
    TrainConfig cfg;
};

int do_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    require_file(a.labels);
    const TrainLabels labels = read_train_labels(a.labels);
    std::vector<TrainingSample> samples;
    std::size_t c_in = 0;
    for (const auto& entry : labels.images) {
        const fs::path p = fs::path(a.bundles) / entry.bundle;
        require_file(p);
        const EmbeddingBundle b = read_bundle(p);
        if (b.records.size() != entry.labels.size())
            throw FormatError(FormatErrorKind::ShapeMismatch,
                              "label count does not match point count for " + entry.bundle);
        c_in = b.c_in;
        for (std::size_t i = 0; i < b.records.size(); ++i) samples.push_back({b.records[i].embedding, entry.labels[i]});
    }
    if (samples.empty()) throw InvalidArgument("no training samples");
    TrainConfig cfg = a.cfg;
    cfg.dims.c_in = c_in;
    ClassifierModel model = train_classifier(samples, labels.layout, cfg);
    for (std::size_t e = 0; e < model.epoch_losses.size(); ++e)
        err << "train: epoch " << (e + 1) << "/" << model.epoch_losses.size() << " mean loss "
            << model.epoch_losses[e] << "\n";
    model.metadata["train_config"] = json{{"learning_rate", cfg.learning_rate},
                                          {"point_batch", cfg.point_batch},
                                          {"epochs", cfg.epochs},
                                          {"seed", cfg.seed},
                                          {"gamma", cfg.gamma},
                                          {"c_in", cfg.dims.c_in},
                                          {"c_mid", cfg.dims.c_mid},
                                          {"feature_dim", cfg.dims.feature_dim},
                                          {"n_samples", samples.size()}}
                                         .dump();
    write_model(model, a.out);
    out << "train: " << samples.size() << " samples, wrote " << a.out << "\n";
    return kExitOk;
}

struct AddClassArgs {
    std::string model;
    int class_id = 0;
    std::vector<std::string> shots;
    std::string out;
};

int do_add_class(const AddClassArgs& a, std::ostream& out) {
    require_file(a.model);
    const ClassifierModel model = read_model(a.model);
    ShotSet shots;
    shots.class_id = a.class_id;
    for (const auto& ref : a.shots) shots.embeddings.push_back(load_shot_embedding(parse_shot_ref(ref, a.class_id), "."));
    ClassifierModel updated = imprint_novel_class(model, shots);
    json imprinted = json::array();
    if (auto it = updated.metadata.find("imprinted"); it != updated.metadata.end()) imprinted = json::parse(it->second);
    imprinted.push_back({{"class_id", a.class_id}, {"shots", a.shots}});
    updated.metadata["imprinted"] = imprinted.dump();
    write_model(updated, a.out);
    out << "add-class: imprinted class " << a.class_id << " from " << shots.n_shots() << " shot(s), wrote " << a.out
        << "\n";
    return kExitOk;
}

struct InferArgs {
    std::string model;
    std::string bundle;
    std::string out;
    InferenceConfig cfg;
};

int do_infer(const InferArgs& a, std::ostream& out) {
    require_file(a.model);
    require_file(a.bundle);
    const ClassifierModel model = read_model(a.model);
    const EmbeddingBundle bundle = read_bundle(a.bundle);
    const auto instances = run_inference(bundle, model, a.cfg);
    write_annotations(predictions_to_annotations(bundle, instances, model.layout, a.cfg), a.out);
    out << "infer: " << instances.size() << " instance(s), wrote " << a.out << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string preds;
    std::string ann;
    std::string layout;
    std::string format = "table";
    std::string out;
};

void emit_report(const Report& report, const std::string& format, const std::string& out_path,
                 const std::string& extra_json, std::ostream& out) {
    const std::string json_text = report_to_json(report, extra_json);
    if (!out_path.empty()) write_text_file(out_path, json_text);
    out << (format == "json" ? json_text : report_to_table(report));
}

int do_eval(const EvalArgs& a, std::ostream& out) {
    require_file(a.ann);
    require_file(a.layout);
    std::vector<fs::path> pred_files;
    if (fs::is_directory(a.preds)) {
        pred_files = files_with_extension(a.preds, ".json");
    } else {
        require_file(a.preds);
        pred_files.push_back(a.preds);
    }
    std::vector<Prediction> preds;
    for (const auto& p : pred_files) {
        const auto set = read_annotations(p);
        auto more = predictions_from(set);
        preds.insert(preds.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
    }
    const auto gts = ground_truths_from(read_annotations(a.ann));
    const ClassLayout layout = read_layout(a.layout);
    const Report report = evaluate_split(preds, gts, layout);
    const json extra{{"config", {{"n_prediction_files", pred_files.size()}, {"n_predictions", preds.size()}}}};
    emit_report(report, a.format, a.out, extra.dump(), out);
    return kExitOk;
}

struct EpisodesArgs {
    std::string model;
    std::string test;
    std::string shots;
    std::size_t repeats = 10;
    std::uint64_t seed = 0;
    std::string format = "table";
    std::string out;
    InferenceConfig cfg;
};

int do_episodes(const EpisodesArgs& a, std::ostream& out, std::ostream& err) {
    require_file(a.model);
    const ClassifierModel model = read_model(a.model);
    std::vector<EmbeddingBundle> bundles;
    for (const auto& p : files_with_extension(a.test, ".sifb")) bundles.push_back(read_bundle(p));
    const fs::path ann = fs::path(a.test) / "annotations.json";
    require_file(ann);
    const auto gts = ground_truths_from(read_annotations(ann));
    const fs::path pool_file = fs::path(a.shots) / "shots.json";
    require_file(pool_file);
    std::map<int, std::vector<Tensor>> pool;
    for (const auto& ref : read_shot_pool(pool_file)) pool[ref.class_id].push_back(load_shot_embedding(ref, a.shots));

    const EpisodeResult r = run_fewshot_episodes(model, bundles, gts, pool, a.cfg, a.repeats, a.seed);
    json episodes = json::array();
    for (std::size_t e = 0; e < r.episodes.size(); ++e) {
        json shots = json::object();
        for (const auto& [cls, idx] : r.chosen_shots[e]) shots[std::to_string(cls)] = idx;
        const auto& ep = r.episodes[e];
        episodes.push_back({{"overall", {{"ap", ep.overall.ap}, {"ap50", ep.overall.ap50}}},
                            {"base", {{"ap", ep.base.ap}, {"ap50", ep.base.ap50}}},
                            {"novel", ep.novel ? json{{"ap", ep.novel->ap}, {"ap50", ep.novel->ap50}} : json(nullptr)},
                            {"shots", shots}});
        err << "episodes: " << (e + 1) << "/" << r.episodes.size() << " overall AP50 " << ep.overall.ap50 << "\n";
    }
    const json extra{{"episodes", episodes},
                     {"config", {{"repeats", a.repeats}, {"seed", a.seed}, {"inference", json::parse(a.cfg.to_json())}}}};
    emit_report(r.mean, a.format, a.out, extra.dump(), out);
    return kExitOk;
}

int do_validate(const std::string& file, std::ostream& out) {
    require_file(file);
    switch (detect_file_kind(file)) {
    case FileKind::Bundle: {
        const auto b = read_bundle(file);
        out << "validate: ok: SIFB bundle, image " << b.image_id << ", " << b.records.size() << " point(s), c_in "
            << b.c_in << "\n";
        break;
    }
    case FileKind::Model: {
        const auto m = read_model(file);
        out << "validate: ok: SIFM model, " << m.num_classes() << " classes, gamma " << m.gamma << "\n";
        break;
    }
    case FileKind::Annotations: {
        const auto s = read_annotations(file);
        out << "validate: ok: annotations, " << s.images.size() << " image(s), " << s.annotations.size()
            << " annotation(s)\n";
        break;
    }
    case FileKind::Unknown:
        throw FormatError(FormatErrorKind::BadMagic, "bad magic: not a SIFB, SIFM or annotation file");
    }
    return kExitOk;
}

void add_inference_flags(CLI::App* sub, InferenceConfig& cfg) {
    sub->add_option("--stability-thresh", cfg.stability_thresh, "Minimum stability score")->capture_default_str();
    sub->add_option("--nms-iou", cfg.nms_iou, "NMS IoU threshold")->capture_default_str();
    sub->add_option("--points-per-side", cfg.points_per_side, "Expected grid size (0 = take from bundle)")
        ->capture_default_str();
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Few-shot classification head and mask post-processing toolkit", "samif"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
    s->add_option("--config", synth.config, "Synthetic config JSON (fields default when absent)");
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train the base classifier");
    t->add_option("--bundles", train.bundles, "Directory holding the training bundles")->required();
    t->add_option("--labels", train.labels, "Per-point labels JSON")->required();
    t->add_option("--out", train.out, "Output model (.sifm)")->required();
    t->add_option("--lr", train.cfg.learning_rate, "SGD learning rate")->capture_default_str();
    t->add_option("--batch", train.cfg.point_batch, "Points per mini-batch")->capture_default_str();
    t->add_option("--epochs", train.cfg.epochs, "Epochs")->capture_default_str();
    t->add_option("--seed", train.cfg.seed, "Random seed")->capture_default_str();
    t->add_option("--gamma", train.cfg.gamma, "Cosine scale")->capture_default_str();
    t->add_option("--c-mid", train.cfg.dims.c_mid, "Convolution channels")->capture_default_str();
    t->add_option("--feature-dim", train.cfg.dims.feature_dim, "Feature dimension")->capture_default_str();

    AddClassArgs add;
    auto* ac = app.add_subcommand("add-class", "Imprint a novel class from shots");
    ac->add_option("--model", add.model, "Input model (.sifm)")->required();
    ac->add_option("--class-id", add.class_id, "Novel class id")->required();
    ac->add_option("--shots", add.shots, "Shot references <bundle.sifb>:<point index>")->required();
    ac->add_option("--out", add.out, "Output model (.sifm)")->required();

    InferArgs infer;
    auto* in = app.add_subcommand("infer", "Run the inference pipeline on one bundle");
    in->add_option("--model", infer.model, "Model (.sifm)")->required();
    in->add_option("--bundle", infer.bundle, "Embedding bundle (.sifb)")->required();
    in->add_option("--out", infer.out, "Predictions JSON")->required();
    add_inference_flags(in, infer.cfg);

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate predictions");
    e->add_option("--preds", ev.preds, "Predictions directory or file")->required();
    e->add_option("--ann", ev.ann, "Ground-truth annotations JSON")->required();
    e->add_option("--layout", ev.layout, "Layout JSON or model (.sifm)")->required();
    e->add_option("--format", ev.format, "Output format")->check(CLI::IsMember({"json", "table"}))->capture_default_str();
    e->add_option("--out", ev.out, "Also write the JSON report here");

    EpisodesArgs ep;
    auto* epi = app.add_subcommand("episodes", "Repeated 1-shot evaluation");
    epi->add_option("--model", ep.model, "Base model (.sifm)")->required();
    epi->add_option("--test", ep.test, "Test directory (bundles + annotations.json)")->required();
    epi->add_option("--shots", ep.shots, "Shot pool directory (shots.json)")->required();
    epi->add_option("--repeats", ep.repeats, "Episodes")->capture_default_str();
    epi->add_option("--seed", ep.seed, "Random seed")->capture_default_str();
    epi->add_option("--format", ep.format, "Output format")->check(CLI::IsMember({"json", "table"}))->capture_default_str();
    epi->add_option("--out", ep.out, "Also write the JSON report here");
    add_inference_flags(epi, ep.cfg);

    std::string validate_file;
    auto* v = app.add_subcommand("validate", "Check a SIFB / SIFM / annotation file");
    v->add_option("--file", validate_file, "File to check")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& ex) {
        err << "samif: usage error: " << ex.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*s) return do_synth(synth, out);
        if (*t) return do_train(train, out, err);
        if (*ac) return do_add_class(add, out);
        if (*in) return do_infer(infer, out);
        if (*e) return do_eval(ev, out);
        if (*epi) {
            if (ep.repeats == 0) {
                err << "samif: usage error: --repeats must be at least 1\n";
                return kExitUsage;
            }
            return do_episodes(ep, out, err);
        }
        if (*v) return do_validate(validate_file, out);
    } catch (const Error& ex) {
        err << "samif: error: " << ex.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& ex) {
        err << "samif: error: " << ex.what() << "\n";
        return kExitData;
    } catch (const json::exception& ex) {
        err << "samif: error: " << ex.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

} // namespace samif::cli
