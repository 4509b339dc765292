#include "samif/bundleio.hpp"

#include "samif/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>

namespace samif {

using nlohmann::json;

namespace {

constexpr char kBundleMagic[4] = {'S', 'I', 'F', 'B'};
constexpr char kModelMagic[4] = {'S', 'I', 'F', 'M'};
constexpr std::size_t kPreambleSize = 16;

[[noreturn]] void fail(FormatErrorKind kind, const std::string& msg) { throw FormatError(kind, msg); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

double get_f32(const std::uint8_t* p) { return static_cast<double>(std::bit_cast<float>(get_u32(p))); }
double get_f64(const std::uint8_t* p) { return std::bit_cast<double>(get_u64(p)); }

std::vector<std::uint8_t> assemble(const char (&magic)[4], const json& header, const std::vector<std::uint8_t>& payload) {
    const std::string text = header.dump();
    std::vector<std::uint8_t> out;
    out.reserve(kPreambleSize + text.size() + payload.size());
    out.insert(out.end(), magic, magic + 4);
    put_u32(out, kFormatVersion);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

struct Container {
    json header;
    std::span<const std::uint8_t> payload;
};

Container disassemble(const char (&magic)[4], std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0)
        fail(FormatErrorKind::BadMagic, std::string("bad magic: expected \"") + std::string(magic, 4) + "\"");
    if (bytes.size() < kPreambleSize) fail(FormatErrorKind::TruncatedPayload, "truncated payload: incomplete preamble");
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kFormatVersion)
        fail(FormatErrorKind::VersionMismatch, "version mismatch: file has version " + std::to_string(version) +
                                                   ", reader supports " + std::to_string(kFormatVersion));
    const std::uint64_t header_len = get_u64(bytes.data() + 8);
    if (header_len > bytes.size() - kPreambleSize)
        fail(FormatErrorKind::TruncatedPayload, "truncated payload: header extends beyond end of file");
    Container c;
    const auto* hbeg = reinterpret_cast<const char*>(bytes.data() + kPreambleSize);
    try {
        c.header = json::parse(hbeg, hbeg + header_len);
    } catch (const json::exception& e) {
        fail(FormatErrorKind::BadHeader, std::string("bad header: ") + e.what());
    }
    if (!c.header.is_object()) fail(FormatErrorKind::BadHeader, "bad header: not a JSON object");
    c.payload = bytes.subspan(kPreambleSize + header_len);
    return c;
}

template <typename T>
T header_get(const json& j, const char* key) {
    if (!j.contains(key)) fail(FormatErrorKind::BadHeader, std::string("bad header: missing field \"") + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(FormatErrorKind::BadHeader, std::string("bad header: field \"") + key + "\" has the wrong type");
    }
}

std::vector<std::size_t> shape_of(const json& j) {
    auto s = header_get<std::vector<std::size_t>>(j, "shape");
    return s;
}

void check_declared_payload(std::uint64_t declared, std::uint64_t actual) {
    if (declared > actual)
        fail(FormatErrorKind::TruncatedPayload, "truncated payload: header declares " + std::to_string(declared) +
                                                    " payload bytes, file holds " + std::to_string(actual));
}

// Checks that the declared block starts where the previous one ended and fits in the payload.
void check_block(std::uint64_t offset, std::uint64_t expected_offset, std::uint64_t nbytes,
                 std::uint64_t payload_size, const std::string& what) {
    if (offset != expected_offset)
        fail(FormatErrorKind::ShapeMismatch, "offset inconsistency: " + what + " declared at byte " +
                                                 std::to_string(offset) + ", expected " +
                                                 std::to_string(expected_offset));
    if (offset + nbytes > payload_size)
        fail(FormatErrorKind::TruncatedPayload, "truncated payload: " + what + " ends beyond end of file");
}

} // namespace

// ---------------------------------------------------------------------------
// Bundles

void EmbeddingBundle::validate() const {
    auto bad = [](const std::string& m) { fail(FormatErrorKind::ShapeMismatch, "shape mismatch: " + m); };
    if (height == 0 || width == 0) bad("image extent must be positive");
    if (c_in == 0 || embed_h == 0 || embed_w == 0) bad("embedding extents must be positive");
    if (logit_h == 0 || logit_w == 0) bad("logit extents must be positive");
    if (provenance != "synthetic" && provenance != "sam2-export") bad("unknown provenance \"" + provenance + "\"");
    const std::vector<std::size_t> emb_shape{c_in, embed_h, embed_w};
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const std::string at = "record " + std::to_string(i) + ": ";
        if (r.logits.height != logit_h || r.logits.width != logit_w || r.logits.values.size() != logit_h * logit_w)
            bad(at + "logit grid does not match header");
        if (r.embedding.shape() != emb_shape) bad(at + "embedding does not match header");
        if (r.point.x < 0 || r.point.y < 0 || static_cast<std::size_t>(r.point.x) >= width ||
            static_cast<std::size_t>(r.point.y) >= height)
            bad(at + "prompt point outside image");
    }
}

LogitGrid EmbeddingBundle::image_logits(std::size_t i) const { return records.at(i).logits.upsample_nearest(height, width); }

EmbeddingBundle EmbeddingBundle::rounded_to_float() const {
    EmbeddingBundle b = *this;
    for (auto& r : b.records) {
        for (auto& v : r.logits.values) v = static_cast<double>(static_cast<float>(v));
        for (auto& v : r.embedding.values()) v = static_cast<double>(static_cast<float>(v));
    }
    return b;
}

std::vector<std::uint8_t> encode_bundle(const EmbeddingBundle& b) {
    b.validate();
    json header;
    header["image_id"] = b.image_id;
    header["height"] = b.height;
    header["width"] = b.width;
    header["c_in"] = b.c_in;
    header["embed_h"] = b.embed_h;
    header["embed_w"] = b.embed_w;
    header["logit_h"] = b.logit_h;
    header["logit_w"] = b.logit_w;
    header["provenance"] = b.provenance;
    header["provenance_note"] = b.provenance_note;
    header["dtype"] = "float32le";

    std::vector<std::uint8_t> payload;
    json records = json::array();
    for (const auto& r : b.records) {
        json rec;
        rec["x"] = r.point.x;
        rec["y"] = r.point.y;
        rec["label"] = r.point.foreground ? 1 : 0;
        rec["logits"] = {{"offset", payload.size()}, {"shape", {b.logit_h, b.logit_w}}};
        for (double v : r.logits.values) put_f32(payload, v);
        rec["embedding"] = {{"offset", payload.size()}, {"shape", {b.c_in, b.embed_h, b.embed_w}}};
        for (double v : r.embedding.values()) put_f32(payload, v);
        records.push_back(std::move(rec));
    }
    header["records"] = std::move(records);
    header["payload_bytes"] = payload.size();
    return assemble(kBundleMagic, header, payload);
}

EmbeddingBundle decode_bundle(std::span<const std::uint8_t> bytes) {
    const Container c = disassemble(kBundleMagic, bytes);
    const json& h = c.header;
    EmbeddingBundle b;
    b.image_id = header_get<std::int64_t>(h, "image_id");
    b.height = header_get<std::size_t>(h, "height");
    b.width = header_get<std::size_t>(h, "width");
    b.c_in = header_get<std::size_t>(h, "c_in");
    b.embed_h = header_get<std::size_t>(h, "embed_h");
    b.embed_w = header_get<std::size_t>(h, "embed_w");
    b.logit_h = header_get<std::size_t>(h, "logit_h");
    b.logit_w = header_get<std::size_t>(h, "logit_w");
    b.provenance = header_get<std::string>(h, "provenance");
    b.provenance_note = h.value("provenance_note", std::string{});
    if (h.value("dtype", std::string("float32le")) != "float32le")
        fail(FormatErrorKind::BadHeader, "bad header: unsupported dtype");
    const auto declared_payload = header_get<std::uint64_t>(h, "payload_bytes");
    check_declared_payload(declared_payload, c.payload.size());
    const json& recs = h.contains("records") ? h.at("records") : json();
    if (!recs.is_array()) fail(FormatErrorKind::BadHeader, "bad header: \"records\" must be an array");

    const std::vector<std::size_t> logit_shape{b.logit_h, b.logit_w};
    const std::vector<std::size_t> emb_shape{b.c_in, b.embed_h, b.embed_w};
    const std::uint64_t payload_size = c.payload.size();
    std::uint64_t cursor = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const json& rj = recs[i];
        const std::string at = "record " + std::to_string(i);
        PointRecord r;
        r.point.x = header_get<int>(rj, "x");
        r.point.y = header_get<int>(rj, "y");
        r.point.foreground = header_get<int>(rj, "label") != 0;

        const json& lj = header_get<json>(rj, "logits");
        if (shape_of(lj) != logit_shape) fail(FormatErrorKind::ShapeMismatch, "shape mismatch: " + at + " logits");
        const std::uint64_t lbytes = 4ULL * b.logit_h * b.logit_w;
        const auto loff = header_get<std::uint64_t>(lj, "offset");
        check_block(loff, cursor, lbytes, payload_size, at + " logits");
        r.logits = LogitGrid(b.logit_h, b.logit_w);
        for (std::size_t k = 0; k < r.logits.values.size(); ++k) r.logits.values[k] = get_f32(&c.payload[loff + 4 * k]);
        cursor += lbytes;

        const json& ej = header_get<json>(rj, "embedding");
        if (shape_of(ej) != emb_shape) fail(FormatErrorKind::ShapeMismatch, "shape mismatch: " + at + " embedding");
        const std::uint64_t ebytes = 4ULL * shape_product(emb_shape);
        const auto eoff = header_get<std::uint64_t>(ej, "offset");
        check_block(eoff, cursor, ebytes, payload_size, at + " embedding");
        r.embedding = Tensor(emb_shape);
        for (std::size_t k = 0; k < r.embedding.size(); ++k) r.embedding[k] = get_f32(&c.payload[eoff + 4 * k]);
        cursor += ebytes;

        b.records.push_back(std::move(r));
    }
    if (declared_payload != cursor)
        fail(FormatErrorKind::ShapeMismatch, "offset inconsistency: payload_bytes does not match record blocks");
    if (payload_size < cursor) fail(FormatErrorKind::TruncatedPayload, "truncated payload");
    if (payload_size > cursor) fail(FormatErrorKind::ShapeMismatch, "offset inconsistency: trailing bytes after payload");
    b.validate();
    return b;
}

void write_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& path) {
    write_file_bytes(path, encode_bundle(bundle));
}

EmbeddingBundle read_bundle(const std::filesystem::path& path) { return decode_bundle(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// Models

namespace {

json layout_json(const ClassLayout& layout) {
    json j;
    j["base_class_ids"] = layout.base_class_ids;
    j["novel_class_ids"] = layout.novel_class_ids;
    std::vector<int> active;
    for (bool a : layout.active) active.push_back(a ? 1 : 0);
    j["active"] = active;
    return j;
}

ClassLayout layout_from(const json& j) {
    ClassLayout l(header_get<std::vector<int>>(j, "base_class_ids"), header_get<std::vector<int>>(j, "novel_class_ids"));
    if (j.contains("active")) {
        const auto active = header_get<std::vector<int>>(j, "active");
        if (active.size() != l.total_classes()) fail(FormatErrorKind::BadHeader, "bad header: active flags length");
        for (std::size_t i = 0; i < active.size(); ++i) l.active[i] = active[i] != 0;
    }
    try {
        l.validate();
    } catch (const InvalidArgument& e) {
        fail(FormatErrorKind::BadHeader, std::string("bad layout: ") + e.what());
    }
    return l;
}

} // namespace

std::vector<std::uint8_t> encode_model(const ClassifierModel& model) {
    model.validate();
    json header;
    header["c_in"] = model.dims.c_in;
    header["c_mid"] = model.dims.c_mid;
    header["feature_dim"] = model.dims.feature_dim;
    header["gamma"] = model.gamma;
    header["layout"] = layout_json(model.layout);
    header["epoch_losses"] = model.epoch_losses;
    header["metadata"] = model.metadata;
    header["dtype"] = "float64le";
    std::vector<std::uint8_t> payload;
    json tensors = json::array();
    const auto names = ClassifierParams::names();
    const auto ts = model.params.tensors();
    for (std::size_t i = 0; i < ClassifierParams::kCount; ++i) {
        tensors.push_back({{"name", names[i]}, {"shape", ts[i]->shape()}, {"offset", payload.size()}});
        for (double v : ts[i]->values()) put_f64(payload, v);
    }
    header["tensors"] = std::move(tensors);
    header["payload_bytes"] = payload.size();
    return assemble(kModelMagic, header, payload);
}

ClassifierModel decode_model(std::span<const std::uint8_t> bytes) {
    const Container c = disassemble(kModelMagic, bytes);
    const json& h = c.header;
    ClassifierDims dims;
    dims.c_in = header_get<std::size_t>(h, "c_in");
    dims.c_mid = header_get<std::size_t>(h, "c_mid");
    dims.feature_dim = header_get<std::size_t>(h, "feature_dim");
    const double gamma = header_get<double>(h, "gamma");
    const ClassLayout layout = layout_from(header_get<json>(h, "layout"));
    if (h.value("dtype", std::string("float64le")) != "float64le")
        fail(FormatErrorKind::BadHeader, "bad header: unsupported dtype");

    ClassifierModel m;
    try {
        m = make_model(dims, layout, gamma);
    } catch (const InvalidArgument& e) {
        fail(FormatErrorKind::BadHeader, std::string("bad header: ") + e.what());
    }
    m.epoch_losses = h.value("epoch_losses", std::vector<double>{});
    m.metadata = h.value("metadata", std::map<std::string, std::string>{});

    const json& tj = header_get<json>(h, "tensors");
    if (!tj.is_array() || tj.size() != ClassifierParams::kCount)
        fail(FormatErrorKind::BadHeader, "bad header: expected " + std::to_string(ClassifierParams::kCount) + " tensors");
    const auto names = ClassifierParams::names();
    auto ts = m.params.tensors();
    const std::uint64_t payload_size = c.payload.size();
    const auto declared_payload = header_get<std::uint64_t>(h, "payload_bytes");
    check_declared_payload(declared_payload, payload_size);
    std::uint64_t cursor = 0;
    for (std::size_t i = 0; i < ClassifierParams::kCount; ++i) {
        const json& e = tj[i];
        if (header_get<std::string>(e, "name") != names[i])
            fail(FormatErrorKind::BadHeader, std::string("bad header: expected tensor ") + names[i]);
        if (shape_of(e) != ts[i]->shape())
            fail(FormatErrorKind::ShapeMismatch, std::string("shape mismatch: tensor ") + names[i]);
        const std::uint64_t nbytes = 8ULL * ts[i]->size();
        const auto off = header_get<std::uint64_t>(e, "offset");
        check_block(off, cursor, nbytes, payload_size, std::string("tensor ") + names[i]);
        for (std::size_t k = 0; k < ts[i]->size(); ++k) (*ts[i])[k] = get_f64(&c.payload[off + 8 * k]);
        cursor += nbytes;
    }
    if (declared_payload != cursor)
        fail(FormatErrorKind::ShapeMismatch, "offset inconsistency: payload_bytes does not match tensor blocks");
    if (payload_size > cursor) fail(FormatErrorKind::ShapeMismatch, "offset inconsistency: trailing bytes after payload");
    try {
        m.validate();
    } catch (const InvalidArgument& e) {
        fail(FormatErrorKind::ShapeMismatch, std::string("invalid model: ") + e.what());
    }
    return m;
}

void write_model(const ClassifierModel& model, const std::filesystem::path& path) {
    write_file_bytes(path, encode_model(model));
}

ClassifierModel read_model(const std::filesystem::path& path) { return decode_model(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// Annotations

void AnnotationSet::validate() const {
    std::map<std::int64_t, const ImageInfo*> image_by_id;
    for (const auto& im : images) image_by_id[im.id] = &im;
    std::set<int> category_ids;
    for (const auto& c : categories) category_ids.insert(c.id);

    std::vector<std::string> problems;
    for (const auto& a : annotations) {
        const std::string who = "annotation " + std::to_string(a.id);
        auto it = image_by_id.find(a.image_id);
        if (it == image_by_id.end()) {
            problems.push_back(who + " -> missing image_id " + std::to_string(a.image_id));
        } else if (a.segmentation.height != it->second->height || a.segmentation.width != it->second->width) {
            problems.push_back(who + " -> segmentation size differs from image " + std::to_string(a.image_id));
        }
        if (!category_ids.contains(a.category_id))
            problems.push_back(who + " -> missing category_id " + std::to_string(a.category_id));
    }
    if (!problems.empty()) {
        std::string msg = "referential integrity: ";
        for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
        fail(FormatErrorKind::ReferentialIntegrity, msg);
    }
    for (const auto& a : annotations) {
        const std::uint64_t total = std::accumulate(a.segmentation.counts.begin(), a.segmentation.counts.end(),
                                                    std::uint64_t{0});
        if (total != static_cast<std::uint64_t>(a.segmentation.height) * a.segmentation.width)
            fail(FormatErrorKind::CorruptRle, "corrupt RLE in annotation " + std::to_string(a.id));
    }
}

std::string annotations_to_json(const AnnotationSet& set) {
    set.validate();
    json j;
    json images = json::array();
    for (const auto& im : set.images) images.push_back({{"id", im.id}, {"height", im.height}, {"width", im.width}});
    json anns = json::array();
    for (const auto& a : set.annotations) {
        json aj = {{"id", a.id},
                   {"image_id", a.image_id},
                   {"category_id", a.category_id},
                   {"segmentation",
                    {{"size", {a.segmentation.height, a.segmentation.width}}, {"counts", a.segmentation.counts}}}};
        if (a.score) aj["score"] = *a.score;
        if (a.stability) aj["stability"] = *a.stability;
        anns.push_back(std::move(aj));
    }
    json cats = json::array();
    for (const auto& c : set.categories) cats.push_back({{"id", c.id}, {"name", c.name}, {"split", c.split}});
    j["images"] = std::move(images);
    j["annotations"] = std::move(anns);
    j["categories"] = std::move(cats);
    if (!set.config_json.empty()) j["config"] = json::parse(set.config_json);
    return j.dump(1) + "\n";
}

AnnotationSet annotations_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(FormatErrorKind::BadHeader, std::string("invalid annotation JSON: ") + e.what());
    }
    if (!j.is_object()) fail(FormatErrorKind::BadHeader, "invalid annotation JSON: top level must be an object");
    for (const char* key : {"images", "annotations", "categories"})
        if (!j.contains(key) || !j.at(key).is_array())
            fail(FormatErrorKind::BadHeader, std::string("invalid annotation JSON: missing array \"") + key + "\"");
    AnnotationSet s;
    for (const auto& im : j.at("images"))
        s.images.push_back({header_get<std::int64_t>(im, "id"), header_get<std::size_t>(im, "height"),
                            header_get<std::size_t>(im, "width")});
    for (const auto& aj : j.at("annotations")) {
        Annotation a;
        a.id = header_get<std::int64_t>(aj, "id");
        a.image_id = header_get<std::int64_t>(aj, "image_id");
        a.category_id = header_get<int>(aj, "category_id");
        const json& seg = header_get<json>(aj, "segmentation");
        const auto size = header_get<std::vector<std::size_t>>(seg, "size");
        if (size.size() != 2) fail(FormatErrorKind::BadHeader, "invalid annotation JSON: segmentation size");
        a.segmentation.height = size[0];
        a.segmentation.width = size[1];
        if (seg.contains("counts") && seg.at("counts").is_string())
            fail(FormatErrorKind::BadHeader, "compressed RLE strings are not supported");
        a.segmentation.counts = header_get<std::vector<std::uint32_t>>(seg, "counts");
        if (aj.contains("score")) a.score = header_get<double>(aj, "score");
        if (aj.contains("stability")) a.stability = header_get<double>(aj, "stability");
        s.annotations.push_back(std::move(a));
    }
    for (const auto& cj : j.at("categories"))
        s.categories.push_back({header_get<int>(cj, "id"), cj.value("name", std::string{}),
                                cj.value("split", std::string{})});
    if (j.contains("config")) s.config_json = j.at("config").dump();
    s.validate();
    return s;
}

AnnotationSet read_annotations(const std::filesystem::path& path) { return annotations_from_json(read_text_file(path)); }

void write_annotations(const AnnotationSet& set, const std::filesystem::path& path) {
    write_text_file(path, annotations_to_json(set));
}

// ---------------------------------------------------------------------------
// Side files

std::string layout_to_json(const ClassLayout& layout) { return layout_json(layout).dump(1) + "\n"; }

ClassLayout layout_from_json(const std::string& text) {
    try {
        return layout_from(json::parse(text));
    } catch (const json::exception& e) {
        fail(FormatErrorKind::BadHeader, std::string("invalid layout JSON: ") + e.what());
    }
}

ClassLayout read_layout(const std::filesystem::path& path) {
    if (detect_file_kind(path) == FileKind::Model) return read_model(path).layout;
    return layout_from_json(read_text_file(path));
}

void write_layout(const ClassLayout& layout, const std::filesystem::path& path) {
    write_text_file(path, layout_to_json(layout));
}

TrainLabels read_train_labels(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        fail(FormatErrorKind::BadHeader, std::string("invalid labels JSON: ") + e.what());
    }
    TrainLabels t;
    t.layout = layout_from(header_get<json>(j, "layout"));
    for (const auto& e : header_get<json>(j, "images"))
        t.images.push_back({header_get<std::string>(e, "bundle"), header_get<std::vector<int>>(e, "labels")});
    return t;
}

void write_train_labels(const TrainLabels& labels, const std::filesystem::path& path) {
    json j;
    j["layout"] = layout_json(labels.layout);
    json images = json::array();
    for (const auto& e : labels.images) images.push_back({{"bundle", e.bundle}, {"labels", e.labels}});
    j["images"] = std::move(images);
    write_text_file(path, j.dump(1) + "\n");
}

ShotRef parse_shot_ref(const std::string& ref, int class_id) {
    const auto colon = ref.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == ref.size())
        throw InvalidArgument("shot reference must look like <bundle>:<point index>, got \"" + ref + "\"");
    ShotRef s;
    s.class_id = class_id;
    s.bundle = ref.substr(0, colon);
    const std::string idx = ref.substr(colon + 1);
    if (!std::all_of(idx.begin(), idx.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
        throw InvalidArgument("shot reference point index is not a number: \"" + ref + "\"");
    s.point_index = std::stoull(idx);
    return s;
}

std::string format_shot_ref(const ShotRef& ref) { return ref.bundle + ":" + std::to_string(ref.point_index); }

std::vector<ShotRef> read_shot_pool(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        fail(FormatErrorKind::BadHeader, std::string("invalid shot pool JSON: ") + e.what());
    }
    std::vector<ShotRef> out;
    for (const auto& e : header_get<json>(j, "shots"))
        out.push_back(parse_shot_ref(header_get<std::string>(e, "ref"), header_get<int>(e, "class_id")));
    return out;
}

void write_shot_pool(const std::vector<ShotRef>& shots, const std::filesystem::path& path) {
    json arr = json::array();
    for (const auto& s : shots) arr.push_back({{"class_id", s.class_id}, {"ref", format_shot_ref(s)}});
    write_text_file(path, json{{"shots", arr}}.dump(1) + "\n");
}

Tensor load_shot_embedding(const ShotRef& ref, const std::filesystem::path& base_dir) {
    std::filesystem::path p(ref.bundle);
    if (p.is_relative()) p = base_dir / p;
    const EmbeddingBundle b = read_bundle(p);
    if (ref.point_index >= b.records.size())
        throw InvalidArgument("shot reference " + format_shot_ref(ref) + " is out of range");
    return b.records[ref.point_index].embedding;
}

// ---------------------------------------------------------------------------

FileKind detect_file_kind(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kBundleMagic, 4) == 0) return FileKind::Bundle;
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kModelMagic, 4) == 0) return FileKind::Model;
    const json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_object() && j.contains("images") && j.contains("annotations")) return FileKind::Annotations;
    return FileKind::Unknown;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(FormatErrorKind::Io, "cannot open file: " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(FormatErrorKind::Io, "cannot write file: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(FormatErrorKind::Io, "write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace samif
