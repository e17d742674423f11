#include "gatedseg/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <unordered_map>

#include <json.hpp>

#include "gatedseg/error.hpp"

namespace gatedseg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

double dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw ArgumentError("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) throw ValidationError("cosine similarity of a zero vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

std::vector<float> l2_normalized(std::span<const float> v) {
    const double norm = std::sqrt(dot(v, v));
    if (!(norm > 0.0) || !std::isfinite(norm)) throw ValidationError("cannot normalize a zero-norm feature");
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
    return out;
}

RegionFeature roi_align(const ArrayF32& patches, const BBox& bbox, int patch_size, std::string region_id) {
    if (patches.rank() != 3) throw ArgumentError("roi_align: patches must be [D, Hp, Wp]");
    if (patch_size < 1) throw ArgumentError("roi_align: patch_size must be >= 1");
    if (bbox.x1 < bbox.x0 || bbox.y1 < bbox.y0 || bbox.x0 < 0 || bbox.y0 < 0)
        throw ArgumentError("roi_align: degenerate bounding box");
    const std::size_t d = patches.dim(0), hp = patches.dim(1), wp = patches.dim(2);
    const double ps = patch_size;

    const double sx = bbox.x0 / ps, ex = (bbox.x1 + 1) / ps;
    const double sy = bbox.y0 / ps, ey = (bbox.y1 + 1) / ps;
    const double xs[2] = {sx + 0.25 * (ex - sx), sx + 0.75 * (ex - sx)};
    const double ys[2] = {sy + 0.25 * (ey - sy), sy + 0.75 * (ey - sy)};

    std::vector<double> acc(d, 0.0);
    const std::size_t plane = hp * wp;
    for (double y : ys) {
        for (double x : xs) {
            const double cy = std::clamp(y, 0.0, static_cast<double>(hp - 1));
            const double cx = std::clamp(x, 0.0, static_cast<double>(wp - 1));
            const auto y0 = static_cast<std::size_t>(std::floor(cy));
            const auto x0 = static_cast<std::size_t>(std::floor(cx));
            const std::size_t y1 = std::min(y0 + 1, hp - 1), x1 = std::min(x0 + 1, wp - 1);
            const double ly = cy - static_cast<double>(y0), lx = cx - static_cast<double>(x0);
            const double w00 = (1 - ly) * (1 - lx), w01 = (1 - ly) * lx, w10 = ly * (1 - lx), w11 = ly * lx;
            for (std::size_t c = 0; c < d; ++c) {
                const float* p = patches.data.data() + c * plane;
                acc[c] += w00 * p[y0 * wp + x0] + w01 * p[y0 * wp + x1] + w10 * p[y1 * wp + x0] +
                          w11 * p[y1 * wp + x1];
            }
        }
    }
    std::vector<float> v(d);
    for (std::size_t c = 0; c < d; ++c) v[c] = static_cast<float>(acc[c] / 4.0);
    return {std::move(region_id), l2_normalized(v)};
}

std::size_t retained_count(std::size_t n, double keep_fraction) {
    if (n == 0) return 0;
    auto k = static_cast<std::size_t>(std::floor(keep_fraction * static_cast<double>(n)));
    return std::clamp<std::size_t>(k, 1, n);
}

std::vector<BankEntry> bank_entries_for_scene(const SceneBundle& scene, const UncertaintySet& maps,
                                              const BankBuildParams& params) {
    auto regions = extract_regions(maps.get(params.uncertainty_kind), params.percentile, params.min_area,
                                   scene.scene_id);
    // Lowest uncertainty first.
    std::stable_sort(regions.begin(), regions.end(), [](const RegionProposal& a, const RegionProposal& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.region_id < b.region_id;
    });
    regions.resize(retained_count(regions.size(), params.keep_fraction));

    const std::size_t w = scene.width();
    std::vector<BankEntry> out;
    for (const auto& r : regions) {
        BankEntry e;
        e.scene_id = scene.scene_id;
        e.region_id = r.region_id;
        e.feature = roi_align(scene.patch_embeddings, r.bbox, params.patch_size, r.region_id);
        e.bbox = r.bbox;
        e.source_uncertainty = r.score;
        e.label_crop = ArrayI32({static_cast<std::size_t>(r.bbox.height()), static_cast<std::size_t>(r.bbox.width())});
        std::size_t k = 0;
        for (int y = r.bbox.y0; y <= r.bbox.y1; ++y)
            for (int x = r.bbox.x0; x <= r.bbox.x1; ++x)
                e.label_crop.data[k++] = scene.labels.data[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
        out.push_back(std::move(e));
    }
    return out;
}

MemoryBank build_bank(std::span<const SceneBundle> scenes, const BankBuildParams& params) {
    if (!(params.keep_fraction > 0.0 && params.keep_fraction <= 1.0))
        throw ArgumentError("build_bank: keep_fraction must lie in (0, 1]");
    MemoryBank bank;
    bank.class_count = params.class_count;
    bank.uncertainty_kind = params.uncertainty_kind;
    for (const auto& s : scenes) {
        if (bank.embed_dim == 0) bank.embed_dim = s.embed_dim();
        if (s.embed_dim() != bank.embed_dim) throw ValidationError("build_bank: scenes differ in embedding width");
        if (bank.class_count == 0) bank.class_count = static_cast<int>(s.classes());
        bank.scenes.push_back({s.scene_id, l2_normalized(s.global_feature.data)});
        auto maps = compute_uncertainty(s.ensemble_logits);
        auto entries = bank_entries_for_scene(s, maps, params);
        if (entries.empty()) std::clog << "warning: bank scene " << s.scene_id << " has no regions\n";
        for (auto& e : entries) bank.entries.push_back(std::move(e));
    }
    return bank;
}

namespace {

std::string crop_file(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "crops/e%05zu.npy", index);
    return buf;
}

json bbox_json(const BBox& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

BBox bbox_from(const json& j) {
    return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

}  // namespace

void save_bank(const MemoryBank& bank, const fs::path& dir) {
    fs::create_directories(dir / "crops");
    const std::size_t d = bank.embed_dim;

    ArrayF32 globals({bank.scenes.size(), d});
    for (std::size_t i = 0; i < bank.scenes.size(); ++i)
        std::copy(bank.scenes[i].global_feature.begin(), bank.scenes[i].global_feature.end(),
                  globals.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    ArrayF32 features({bank.entries.size(), d});
    for (std::size_t i = 0; i < bank.entries.size(); ++i)
        std::copy(bank.entries[i].feature.vector.begin(), bank.entries[i].feature.vector.end(),
                  features.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    write_tensor(dir / "globals.npy", globals);
    write_tensor(dir / "features.npy", features);

    json j;
    j["version"] = kBankVersion;
    j["class_count"] = bank.class_count;
    j["embed_dim"] = bank.embed_dim;
    j["uncertainty_kind"] = uncertainty_kind_name(bank.uncertainty_kind);
    json scenes = json::array();
    for (const auto& s : bank.scenes) scenes.push_back(s.scene_id);
    j["scenes"] = scenes;
    json entries = json::array();
    for (std::size_t i = 0; i < bank.entries.size(); ++i) {
        const auto& e = bank.entries[i];
        write_tensor(dir / crop_file(i), e.label_crop);
        entries.push_back({{"scene_id", e.scene_id},
                           {"region_id", e.region_id},
                           {"bbox", bbox_json(e.bbox)},
                           {"source_uncertainty", e.source_uncertainty},
                           {"label_crop", crop_file(i)}});
    }
    j["entries"] = entries;
    write_text_file(dir / "bank.json", j.dump(2) + "\n");
}

MemoryBank load_bank(const fs::path& dir) {
    const fs::path meta = dir / "bank.json";
    if (!fs::exists(meta)) throw IoError("no bank.json in " + dir.string());
    json j;
    try {
        j = json::parse(read_text_file(meta));
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("bank.json is not valid JSON: ") + e.what());
    }

    MemoryBank bank;
    std::vector<json> entries_meta;
    std::vector<std::string> scene_ids;
    try {
        auto version = j.at("version").get<std::string>();
        if (version != kBankVersion)
            throw ValidationError("bank version '" + version + "' unsupported (expected " + kBankVersion + ")");
        bank.class_count = j.at("class_count").get<int>();
        bank.embed_dim = j.at("embed_dim").get<std::size_t>();
        bank.uncertainty_kind = parse_uncertainty_kind(j.value("uncertainty_kind", "mutual_information"));
        scene_ids = j.at("scenes").get<std::vector<std::string>>();
        for (const auto& e : j.at("entries")) entries_meta.push_back(e);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bank.json field error: ") + e.what());
    }

    const std::size_t d = bank.embed_dim;
    ArrayF32 globals = read_f32(dir / "globals.npy");
    ArrayF32 features = read_f32(dir / "features.npy");
    if (globals.shape != Shape{scene_ids.size(), d})
        throw CorruptionError("globals.npy shape " + shape_string(globals.shape) + " disagrees with bank.json");
    if (features.shape != Shape{entries_meta.size(), d})
        throw CorruptionError("features.npy shape " + shape_string(features.shape) + " disagrees with bank.json");

    std::unordered_map<std::string, std::size_t> scene_index;
    for (std::size_t i = 0; i < scene_ids.size(); ++i) {
        scene_index[scene_ids[i]] = i;
        bank.scenes.push_back({scene_ids[i], std::vector<float>(globals.data.begin() + static_cast<std::ptrdiff_t>(i * d),
                                                                globals.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d))});
    }
    for (std::size_t i = 0; i < entries_meta.size(); ++i) {
        const json& m = entries_meta[i];
        BankEntry e;
        try {
            e.scene_id = m.at("scene_id").get<std::string>();
            e.region_id = m.at("region_id").get<std::string>();
            e.bbox = bbox_from(m.at("bbox"));
            e.source_uncertainty = m.at("source_uncertainty").get<double>();
            e.label_crop = read_i32(dir / m.at("label_crop").get<std::string>());
        } catch (const json::exception& ex) {
            throw FormatError(std::string("bank.json entry error: ") + ex.what());
        }
        if (!scene_index.count(e.scene_id))
            throw ValidationError("bank entry " + e.region_id + " references unknown scene " + e.scene_id);
        if (e.label_crop.shape != Shape{static_cast<std::size_t>(e.bbox.height()), static_cast<std::size_t>(e.bbox.width())})
            throw CorruptionError("label crop of " + e.region_id + " does not match its bbox");
        e.feature.region_id = e.region_id;
        e.feature.vector.assign(features.data.begin() + static_cast<std::ptrdiff_t>(i * d),
                                features.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
        bank.entries.push_back(std::move(e));
    }
    return bank;
}

std::vector<RetrievalMatch> query_hierarchical(const MemoryBank& bank, std::span<const float> query_global,
                                               const RegionFeature& query_region, std::size_t top_images,
                                               std::size_t top_regions) {
    if (bank.scenes.empty()) throw ArgumentError("query_hierarchical: empty memory bank");
    const std::vector<float> qg = l2_normalized(query_global);
    const std::vector<float> qr = l2_normalized(query_region.vector);

    struct Scored {
        std::size_t index;
        double sim;
    };
    std::vector<Scored> scenes;
    scenes.reserve(bank.scenes.size());
    for (std::size_t i = 0; i < bank.scenes.size(); ++i)
        scenes.push_back({i, dot(qg, bank.scenes[i].global_feature)});
    std::sort(scenes.begin(), scenes.end(), [&](const Scored& a, const Scored& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return bank.scenes[a.index].scene_id < bank.scenes[b.index].scene_id;
    });
    if (scenes.size() > top_images) scenes.resize(top_images);

    std::unordered_map<std::string, double> kept;
    for (const auto& s : scenes) kept[bank.scenes[s.index].scene_id] = s.sim;

    std::vector<RetrievalMatch> matches;
    for (std::size_t i = 0; i < bank.entries.size(); ++i) {
        auto it = kept.find(bank.entries[i].scene_id);
        if (it == kept.end()) continue;
        matches.push_back({i, std::clamp(dot(qr, bank.entries[i].feature.vector), -1.0, 1.0), it->second});
    }
    std::sort(matches.begin(), matches.end(), [&](const RetrievalMatch& a, const RetrievalMatch& b) {
        if (a.region_similarity != b.region_similarity) return a.region_similarity > b.region_similarity;
        const auto& ea = bank.entries[a.entry_index];
        const auto& eb = bank.entries[b.entry_index];
        if (ea.scene_id != eb.scene_id) return ea.scene_id < eb.scene_id;
        return ea.region_id < eb.region_id;
    });
    if (matches.size() > top_regions) matches.resize(top_regions);
    return matches;
}

}  // namespace gatedseg
