#include "gatedseg/pipeline.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "gatedseg/error.hpp"
#include "gatedseg/fusion.hpp"
#include "gatedseg/gating.hpp"
#include "gatedseg/parallel.hpp"

namespace gatedseg {

namespace fs = std::filesystem;

BankBuildParams bank_params(const PipelineConfig& cfg, const Manifest& m) {
    BankBuildParams p;
    p.uncertainty_kind = cfg.uncertainty;
    p.keep_fraction = cfg.retrieval.keep_fraction;
    p.percentile = cfg.regions.percentile;
    p.min_area = cfg.regions.min_area;
    p.patch_size = m.patch_size;
    p.class_count = m.class_count;
    return p;
}

MemoryBank build_bank_from_manifest(const Manifest& m, const PipelineConfig& cfg, int jobs) {
    if (m.bank_split.empty()) throw ValidationError("manifest has an empty bank split");
    const BankBuildParams params = bank_params(cfg, m);
    std::vector<BankScene> scenes(m.bank_split.size());
    std::vector<std::vector<BankEntry>> entries(m.bank_split.size());
    std::size_t dim = 0;
    parallel_for(m.bank_split.size(), jobs, [&](std::size_t i) {
        SceneBundle b = load_bundle(m, m.bank_split[i]);
        scenes[i] = {b.scene_id, l2_normalized(b.global_feature.data)};
        entries[i] = bank_entries_for_scene(b, compute_uncertainty(b.ensemble_logits), params);
    });
    MemoryBank bank;
    bank.class_count = m.class_count;
    bank.uncertainty_kind = cfg.uncertainty;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        if (dim == 0) dim = scenes[i].global_feature.size();
        if (scenes[i].global_feature.size() != dim) throw ValidationError("bank scenes differ in embedding width");
        bank.scenes.push_back(std::move(scenes[i]));
        for (auto& e : entries[i]) bank.entries.push_back(std::move(e));
    }
    bank.embed_dim = dim;
    return bank;
}

namespace {

struct RegionWork {
    RegionProposal region;
    GateMetrics metrics;
    std::vector<RetrievalMatch> matches;
    double base_iou = 0.0;
    double fused_iou = 0.0;
};

struct SceneWork {
    std::string scene_id;
    ProbMap mean;
    std::vector<RegionWork> regions;
};

}  // namespace

RunResult run_pipeline(const Manifest& m, const MemoryBank& bank, const PipelineConfig& cfg, int jobs) {
    validate_config(cfg);
    if (bank.class_count != m.class_count)
        throw ValidationError("bank class_count " + std::to_string(bank.class_count) + " differs from manifest " +
                              std::to_string(m.class_count));
    const GatePolicy policy = parse_policy(cfg.gate_policy);
    const auto classes = static_cast<std::size_t>(m.class_count);

    std::vector<SceneWork> work(m.eval_split.size());
    parallel_for(work.size(), jobs, [&](std::size_t s) {
        SceneBundle b = load_bundle(m, m.eval_split[s]);
        if (b.embed_dim() != bank.embed_dim) throw ValidationError("scene " + b.scene_id + ": embedding width differs from bank");
        UncertaintySet maps = compute_uncertainty(b.ensemble_logits);
        const auto base_pred = argmax_labels(maps.mean);
        SceneWork& sw = work[s];
        sw.scene_id = b.scene_id;
        auto regions = extract_regions(maps.get(cfg.uncertainty), cfg.regions.percentile, cfg.regions.min_area, b.scene_id);
        for (auto& r : regions) {
            RegionWork rw;
            rw.metrics = compute_metrics(r, maps, base_pred, &b.labels, cfg.uncertainty, m.void_label);
            rw.base_iou = *rw.metrics.base_iou;
            RegionFeature feat = roi_align(b.patch_embeddings, r.bbox, m.patch_size, r.region_id);
            rw.matches = query_hierarchical(bank, b.global_feature.data, feat, cfg.retrieval.top_images,
                                            cfg.retrieval.top_regions);
            rw.fused_iou = rw.base_iou;
            if (!rw.matches.empty()) {
                rw.metrics.best_similarity = rw.matches.front().region_similarity;
                auto crops = matched_crops(bank, rw.matches, r.bbox, classes, cfg.fusion);
                ProbCrop fused = fuse_region(crop_probs(maps.mean, r.bbox), crops, cfg.fusion);
                ProbMap as_map(fused.classes, fused.height, fused.width);
                as_map.values = std::move(fused.values);
                auto pred = argmax_labels(as_map);
                auto gt = crop_labels(b.labels.data, b.width(), r.bbox);
                rw.fused_iou = region_iou(pred, gt, classes, m.void_label);
            }
            rw.region = std::move(r);
            sw.regions.push_back(std::move(rw));
        }
        sw.mean = std::move(maps.mean);
    });

    // Population in eval-split order, then region order.
    std::vector<GateMetrics> population;
    std::vector<std::pair<std::size_t, std::size_t>> where;
    for (std::size_t s = 0; s < work.size(); ++s)
        for (std::size_t r = 0; r < work[s].regions.size(); ++r) {
            population.push_back(work[s].regions[r].metrics);
            where.emplace_back(s, r);
        }
    if (population.empty()) throw ValidationError("no regions extracted from the eval split");
    // Gating reads the cached matches; best_similarity is visible to every
    // policy only through the provider, so strip it from the population.
    for (auto& g : population) g.best_similarity.reset();
    const auto decisions = gate(policy, population, [&](std::size_t i) {
        return work[where[i].first].regions[where[i].second].matches;
    });

    RunResult out;
    out.records.policy = policy.name();
    std::vector<std::vector<FusionDecision>> per_scene(work.size());
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        const auto [s, r] = where[i];
        const RegionWork& rw = work[s].regions[r];
        RegionRecord rec;
        rec.region_id = rw.region.region_id;
        rec.scene_id = work[s].scene_id;
        rec.bbox = rw.region.bbox;
        rec.area = rw.region.area;
        rec.score = rw.region.score;
        rec.metrics = rw.metrics;
        rec.passed_gate = decisions[i].passed;
        rec.base_iou = rw.base_iou;
        rec.fused_iou = rw.fused_iou;
        rec.delta_iou = rw.fused_iou - rw.base_iou;
        rec.success = rec.delta_iou > 0.0;
        out.records.records.push_back(std::move(rec));
        if (decisions[i].passed)
            per_scene[s].push_back({rw.region, matched_crops(bank, decisions[i].matches, rw.region.bbox, classes, cfg.fusion)});
    }

    out.scenes.resize(work.size());
    parallel_for(work.size(), jobs, [&](std::size_t s) {
        out.scenes[s].scene_id = work[s].scene_id;
        out.scenes[s].fused = apply_fusion(work[s].mean, per_scene[s], cfg.fusion);
        out.scenes[s].base = std::move(work[s].mean);
    });
    return out;
}

void write_run(const RunResult& run, const fs::path& out_dir) {
    fs::create_directories(out_dir / "fused");
    write_text_file(out_dir / "records.json", run_records_to_json(run.records));
    for (const auto& s : run.scenes) {
        const ProbMap& f = s.fused;
        write_tensor(out_dir / "fused" / (s.scene_id + "_probs.npy"), ArrayF32({f.classes, f.height, f.width}, f.values));
        write_tensor(out_dir / "fused" / (s.scene_id + "_pred.npy"), ArrayI32({f.height, f.width}, argmax_labels(f)));
    }
}

RunRecords load_run_records(const fs::path& out_dir) {
    const fs::path p = out_dir / "records.json";
    if (!fs::exists(p)) throw IoError("no records.json in " + out_dir.string() + " (run the 'run' step first)");
    return run_records_from_json(read_text_file(p));
}

std::string describe_bank(const MemoryBank& bank) {
    std::ostringstream os;
    os << "memory bank: " << bank.scenes.size() << " scenes, " << bank.entries.size() << " region entries\n";
    os << "  class_count " << bank.class_count << ", embed_dim " << bank.embed_dim << ", confidence filter "
       << uncertainty_kind_name(bank.uncertainty_kind) << "\n";
    std::map<std::string, std::size_t> per_scene;
    for (const auto& e : bank.entries) ++per_scene[e.scene_id];
    double min_norm = 1e300, max_norm = 0.0, min_u = 1e300, max_u = -1e300;
    for (const auto& e : bank.entries) {
        double n = std::sqrt(dot(e.feature.vector, e.feature.vector));
        min_norm = std::min(min_norm, n);
        max_norm = std::max(max_norm, n);
        min_u = std::min(min_u, e.source_uncertainty);
        max_u = std::max(max_u, e.source_uncertainty);
    }
    os << std::setprecision(9);
    if (!bank.entries.empty()) {
        os << "  feature norms in [" << min_norm << ", " << max_norm << "]\n";
        os << "  source uncertainty in [" << min_u << ", " << max_u << "]\n";
    }
    os << "  entries per scene:\n";
    for (const auto& s : bank.scenes) {
        auto it = per_scene.find(s.scene_id);
        os << "    " << s.scene_id << "  " << (it == per_scene.end() ? 0 : it->second) << "\n";
    }
    return os.str();
}

}  // namespace gatedseg
