#include "gatedseg/store.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "gatedseg/error.hpp"

namespace gatedseg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const SceneFiles& Manifest::scene(const std::string& scene_id) const {
    for (const auto& s : scenes)
        if (s.scene_id == scene_id) return s;
    throw ValidationError("unknown scene_id '" + scene_id + "'");
}

std::string manifest_to_json(const Manifest& m) {
    json j;
    j["version"] = m.version;
    j["class_count"] = m.class_count;
    j["void_label"] = m.void_label;
    j["patch_size"] = m.patch_size;
    json scenes = json::array();
    for (const auto& s : m.scenes) {
        scenes.push_back({{"scene_id", s.scene_id},
                          {"logits", s.logits},
                          {"patch_embeddings", s.patch_embeddings},
                          {"global_feature", s.global_feature},
                          {"labels", s.labels}});
    }
    j["scenes"] = scenes;
    j["splits"] = {{"bank", m.bank_split}, {"eval", m.eval_split}};
    return j.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text, const fs::path& root) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
    }
    Manifest m;
    m.root = root;
    try {
        m.version = j.at("version").get<std::string>();
        m.class_count = j.at("class_count").get<int>();
        m.void_label = j.value("void_label", kVoidLabel);
        m.patch_size = j.at("patch_size").get<int>();
        for (const auto& s : j.at("scenes")) {
            m.scenes.push_back({s.at("scene_id").get<std::string>(), s.at("logits").get<std::string>(),
                                s.at("patch_embeddings").get<std::string>(),
                                s.at("global_feature").get<std::string>(), s.at("labels").get<std::string>()});
        }
        if (j.contains("splits")) {
            m.bank_split = j["splits"].value("bank", std::vector<std::string>{});
            m.eval_split = j["splits"].value("eval", std::vector<std::string>{});
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest field error: ") + e.what());
    }

    if (m.version != kManifestVersion)
        throw ValidationError("manifest version '" + m.version + "' unsupported (expected " +
                              kManifestVersion + ")");
    if (m.class_count < 2) throw ValidationError("manifest class_count must be >= 2");
    if (m.void_label >= 0 && m.void_label < m.class_count)
        throw ValidationError("manifest void_label collides with a class index");
    if (m.patch_size < 1) throw ValidationError("manifest patch_size must be >= 1");

    std::set<std::string> ids;
    for (const auto& s : m.scenes) {
        if (!ids.insert(s.scene_id).second) throw ValidationError("duplicate scene_id '" + s.scene_id + "'");
        for (const auto* rel : {&s.logits, &s.patch_embeddings, &s.global_feature, &s.labels}) {
            if (!fs::exists(root / *rel))
                throw ValidationError("scene '" + s.scene_id + "': missing file " + (root / *rel).string());
        }
    }
    std::set<std::string> bank(m.bank_split.begin(), m.bank_split.end());
    for (const auto* split : {&m.bank_split, &m.eval_split}) {
        for (const auto& id : *split)
            if (!ids.count(id)) throw ValidationError("split references unknown scene_id '" + id + "'");
    }
    for (const auto& id : m.eval_split)
        if (bank.count(id)) throw ValidationError("scene '" + id + "' is in both bank and eval splits");
    return m;
}

Manifest load_manifest(const fs::path& manifest_path) {
    if (!fs::exists(manifest_path)) throw IoError("manifest not found: " + manifest_path.string());
    return manifest_from_json(read_text_file(manifest_path), manifest_path.parent_path());
}

void save_manifest(const Manifest& m, const fs::path& manifest_path) {
    write_text_file(manifest_path, manifest_to_json(m));
}

void validate_bundle(const SceneBundle& b, const Manifest& m) {
    auto fail = [&](const std::string& msg) { throw ValidationError("scene '" + b.scene_id + "': " + msg); };
    const auto& lg = b.ensemble_logits;
    if (lg.rank() != 4) fail("ensemble_logits must be rank 4 [K, C, H, W], got " + shape_string(lg.shape));
    if (lg.dim(0) < 2) fail("ensemble needs K >= 2 members, got " + std::to_string(lg.dim(0)));
    if (lg.dim(1) < 2) fail("class count C must be >= 2");
    if (static_cast<int>(lg.dim(1)) != m.class_count)
        fail("logits carry " + std::to_string(lg.dim(1)) + " classes, manifest says " +
             std::to_string(m.class_count));
    std::size_t h = lg.dim(2), w = lg.dim(3);
    if (h == 0 || w == 0) fail("empty image extent");

    const auto& lb = b.labels;
    if (lb.rank() != 2 || lb.dim(0) != h || lb.dim(1) != w)
        fail("labels shape " + shape_string(lb.shape) + " does not match logits H x W [" + std::to_string(h) +
             ", " + std::to_string(w) + "]");
    for (auto v : lb.data) {
        if (v != m.void_label && (v < 0 || v >= m.class_count))
            fail("label value " + std::to_string(v) + " outside [0, C) and not void");
    }

    const auto& pe = b.patch_embeddings;
    if (pe.rank() != 3) fail("patch_embeddings must be rank 3 [D, Hp, Wp]");
    if (pe.dim(0) == 0) fail("embedding width D must be >= 1");
    if (pe.dim(1) * pe.dim(2) == 0) fail("patch grid is empty");
    auto ps = static_cast<std::size_t>(m.patch_size);
    if (pe.dim(1) != (h + ps - 1) / ps || pe.dim(2) != (w + ps - 1) / ps)
        fail("patch grid " + shape_string({pe.dim(1), pe.dim(2)}) + " inconsistent with image " +
             shape_string({h, w}) + " at patch_size " + std::to_string(ps));

    const auto& gf = b.global_feature;
    if (gf.rank() != 1 || gf.dim(0) != pe.dim(0))
        fail("global_feature shape " + shape_string(gf.shape) + " does not match D=" + std::to_string(pe.dim(0)));
}

SceneBundle load_bundle(const Manifest& m, const std::string& scene_id) {
    const SceneFiles& f = m.scene(scene_id);
    SceneBundle b;
    b.scene_id = scene_id;
    b.ensemble_logits = read_f32(m.root / f.logits);
    b.patch_embeddings = read_f32(m.root / f.patch_embeddings);
    b.global_feature = read_f32(m.root / f.global_feature);
    b.labels = read_i32(m.root / f.labels);
    validate_bundle(b, m);
    return b;
}

void write_bundle(const SceneBundle& b, const SceneFiles& files, const fs::path& root) {
    auto put = [&](const std::string& rel, const Tensor& t) {
        fs::path p = root / rel;
        fs::create_directories(p.parent_path());
        write_tensor(p, t);
    };
    put(files.logits, b.ensemble_logits);
    put(files.patch_embeddings, b.patch_embeddings);
    put(files.global_feature, b.global_feature);
    put(files.labels, b.labels);
}

std::size_t validate_dataset(const Manifest& m) {
    for (const auto& s : m.scenes) load_bundle(m, s.scene_id);
    return m.scenes.size();
}

}  // namespace gatedseg
