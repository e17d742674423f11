#include "gatedseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gatedseg/error.hpp"
#include "gatedseg/parallel.hpp"
#include "gatedseg/rng.hpp"

namespace gatedseg {

namespace fs = std::filesystem;

namespace {

constexpr double kLogitScale = 6.0;
constexpr double kBoundaryOwnWeight = 0.65;
constexpr int kFlipSlots = 8;
constexpr int kDoubtSlots = 5;
constexpr int kClutterCell = 3;
constexpr double kEmbedNoise = 0.03;

// Independent sub-streams per concern so that changing one stage's draws
// never shifts another's.
enum Stream : std::uint64_t { kLayout = 1, kPatches, kClutter, kEmbedding, kLogitNoise };

struct Rect {
    int x0, y0, x1, y1;  // inclusive
    bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

Rect random_rect(SplitMix64& rng, int h, int w, int min_side, int max_side) {
    const int rw = std::min(w, rng.range(min_side, max_side));
    const int rh = std::min(h, rng.range(min_side, max_side));
    const int x0 = rng.range(0, w - rw);
    const int y0 = rng.range(0, h - rh);
    return {x0, y0, x0 + rw - 1, y0 + rh - 1};
}

struct Clutter {
    Rect rect;
    std::vector<int> classes;
    int cells_x = 0, cells_y = 0;
    std::vector<int> cell_class;  // true class per cell
    // Per member, per cell: the class that member predicts.
    std::vector<std::vector<int>> member_class;

    int cell_index(int x, int y) const {
        return ((y - rect.y0) / kClutterCell) * cells_x + (x - rect.x0) / kClutterCell;
    }
};

enum class PatchKind { flip, doubt };

struct Patch {
    PatchKind kind;
    Rect rect;
    double activation;
    int other_class;
    std::vector<double> member_weight;
    double embed_shift;
};

// Class frequencies fall off as 1/(c+1), so low class ids are common.
int skewed_class(SplitMix64& rng, int classes) {
    double total = 0.0;
    for (int c = 0; c < classes; ++c) total += 1.0 / (c + 1);
    double u = rng.uniform() * total;
    for (int c = 0; c < classes; ++c) {
        u -= 1.0 / (c + 1);
        if (u < 0.0) return c;
    }
    return classes - 1;
}

std::uint64_t scene_seed(const SynthConfig& cfg, int index) {
    return cfg.seed ^ mix64(static_cast<std::uint64_t>(index) + 1);
}

}  // namespace

void validate_synth_config(const SynthConfig& cfg) {
    std::vector<std::string> errs;
    if (cfg.scene_count < 2) errs.push_back("synth.scene_count must be >= 2");
    if (cfg.patch_size < 1) errs.push_back("synth.patch_size must be >= 1");
    if (cfg.height < std::max(cfg.patch_size, 1)) errs.push_back("synth.height must be >= patch_size");
    if (cfg.width < std::max(cfg.patch_size, 1)) errs.push_back("synth.width must be >= patch_size");
    if (cfg.class_count < 2 || cfg.class_count >= kVoidLabel)
        errs.push_back("synth.class_count must lie in [2, 255)");
    if (cfg.ensemble_size < 2) errs.push_back("synth.ensemble_size must be >= 2");
    if (cfg.embed_dim < 1) errs.push_back("synth.embed_dim must be >= 1");
    if (!(cfg.corruption_severity >= 0.0 && cfg.corruption_severity <= 1.0))
        errs.push_back("synth.corruption_severity must lie in [0, 1]");
    if (!(cfg.bank_fraction > 0.0 && cfg.bank_fraction < 1.0)) errs.push_back("synth.bank_fraction must lie in (0, 1)");
    if (errs.empty()) return;
    std::string msg = "invalid synth config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
}

std::vector<std::vector<float>> class_prototypes(const SynthConfig& cfg) {
    SplitMix64 rng(mix64(cfg.seed ^ 0x70726F746F747970ULL));
    std::vector<std::vector<float>> protos;
    for (int c = 0; c <= cfg.class_count; ++c) {
        std::vector<double> v(static_cast<std::size_t>(cfg.embed_dim));
        double norm = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        std::vector<float> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
        protos.push_back(std::move(out));
    }
    return protos;
}

std::string synth_scene_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%04d", index);
    return buf;
}

SceneBundle generate_scene(const SynthConfig& cfg, int index) {
    if (index < 0 || index >= cfg.scene_count) throw ArgumentError("generate_scene: index out of range");
    const int h = cfg.height, w = cfg.width, classes = cfg.class_count, k_count = cfg.ensemble_size;
    const double sev = cfg.corruption_severity;
    const std::uint64_t base_seed = scene_seed(cfg, index);
    auto stream = [&](Stream s) { return SplitMix64(mix64(base_seed + s)); };
    auto px = [w](int x, int y) { return static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x); };

    // ---- ground truth layout: stripes, objects, clutter, void ----
    SplitMix64 layout = stream(kLayout);
    std::vector<std::int32_t> labels(static_cast<std::size_t>(h * w), 0);
    const int frequent = std::min(classes, 6);
    {
        const int stripes = layout.range(2, 4);
        std::vector<int> cuts;
        for (int i = 0; i < stripes - 1; ++i) cuts.push_back(layout.range(h / 6, (5 * h) / 6));
        std::sort(cuts.begin(), cuts.end());
        cuts.push_back(h);
        int row = 0, prev = -1;
        for (int s = 0; s < stripes; ++s) {
            int cls = layout.range(0, frequent - 1);
            if (cls == prev) cls = (cls + 1) % frequent;
            prev = cls;
            for (; row < cuts[static_cast<std::size_t>(s)]; ++row)
                for (int x = 0; x < w; ++x) labels[px(x, row)] = cls;
        }
        const int objects = layout.range(3, 6);
        for (int o = 0; o < objects; ++o) {
            Rect r = random_rect(layout, h, w, 12, 36);
            const int cls = skewed_class(layout, classes);
            for (int y = r.y0; y <= r.y1; ++y)
                for (int x = r.x0; x <= r.x1; ++x) labels[px(x, y)] = cls;
        }
    }
    std::vector<Clutter> clutters(static_cast<std::size_t>(layout.range(1, 2)));
    for (auto& cl : clutters) {
        cl.rect = random_rect(layout, h, w, 18, 30);
        const int n_cls = std::min(classes, layout.range(2, 3));
        while (static_cast<int>(cl.classes.size()) < n_cls) {
            const int c = layout.range(0, classes - 1);
            if (std::find(cl.classes.begin(), cl.classes.end(), c) == cl.classes.end()) cl.classes.push_back(c);
        }
        cl.cells_x = (cl.rect.x1 - cl.rect.x0) / kClutterCell + 1;
        cl.cells_y = (cl.rect.y1 - cl.rect.y0) / kClutterCell + 1;
        cl.cell_class.resize(static_cast<std::size_t>(cl.cells_x * cl.cells_y));
        for (auto& c : cl.cell_class) c = cl.classes[layout.below(cl.classes.size())];
        for (int y = cl.rect.y0; y <= cl.rect.y1; ++y)
            for (int x = cl.rect.x0; x <= cl.rect.x1; ++x)
                labels[px(x, y)] = cl.cell_class[static_cast<std::size_t>(cl.cell_index(x, y))];
    }
    if (layout.uniform() < 0.5) {
        const int rows = std::min(h - 1, layout.range(2, 6));
        for (int y = h - rows; y < h; ++y)
            for (int x = 0; x < w; ++x) labels[px(x, y)] = kVoidLabel;
    }

    // ---- corruption candidates; activation is monotone in severity ----
    SplitMix64 prng = stream(kPatches);
    std::vector<Patch> patches;
    for (int i = 0; i < kFlipSlots + kDoubtSlots; ++i) {
        Patch p;
        p.kind = i < kFlipSlots ? PatchKind::flip : PatchKind::doubt;
        p.rect = random_rect(prng, h, w, 16, 28);
        p.activation = prng.uniform();
        const std::int32_t center = labels[px((p.rect.x0 + p.rect.x1) / 2, (p.rect.y0 + p.rect.y1) / 2)];
        const int shift = prng.range(1, classes - 1);
        p.other_class = center == kVoidLabel ? shift % classes : (center + shift) % classes;
        for (int k = 0; k < k_count; ++k)
            p.member_weight.push_back(p.kind == PatchKind::flip ? prng.uniform(0.55, 1.0) : prng.uniform(0.0, 0.8));
        p.embed_shift = prng.uniform();
        patches.push_back(std::move(p));
    }
    // Active patch per pixel, -1 for none. The earliest-activating patch
    // keeps a pixel and clutter is never covered, so raising severity only
    // adds corruption.
    std::vector<int> patch_at(labels.size(), -1);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const Patch& p = patches[i];
        if (!(p.activation < sev)) continue;
        for (int y = p.rect.y0; y <= p.rect.y1; ++y)
            for (int x = p.rect.x0; x <= p.rect.x1; ++x) {
                int& owner = patch_at[px(x, y)];
                const bool cluttered = std::any_of(clutters.begin(), clutters.end(),
                                                   [&](const Clutter& c) { return c.rect.contains(x, y); });
                if (cluttered) continue;
                if (owner < 0 || p.activation < patches[static_cast<std::size_t>(owner)].activation)
                    owner = static_cast<int>(i);
            }
    }

    SplitMix64 crng = stream(kClutter);
    const double clutter_rate = 0.8 * sev;
    for (auto& cl : clutters) {
        cl.member_class.resize(static_cast<std::size_t>(k_count));
        for (auto& mc : cl.member_class) {
            mc.resize(cl.cell_class.size());
            for (std::size_t c = 0; c < mc.size(); ++c) {
                const double u = crng.uniform();
                const int alt = cl.classes[crng.below(cl.classes.size())];
                mc[c] = u < clutter_rate ? alt : cl.cell_class[c];
            }
        }
    }

    // Predicted class layer: labels with flip patches applied; void pixels
    // fall back to class 0.
    std::vector<std::int32_t> corrupted(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        corrupted[i] = labels[i] == kVoidLabel ? 0 : labels[i];
        if (patch_at[i] >= 0 && patches[static_cast<std::size_t>(patch_at[i])].kind == PatchKind::flip)
            corrupted[i] = patches[static_cast<std::size_t>(patch_at[i])].other_class;
    }

    // ---- ensemble logits [K, C, H, W] ----
    SceneBundle b;
    b.scene_id = synth_scene_id(index);
    const std::size_t plane = labels.size();
    b.ensemble_logits = ArrayF32({static_cast<std::size_t>(k_count), static_cast<std::size_t>(classes),
                                  static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    auto& lg = b.ensemble_logits.data;
    auto logit = [&](int k, int c, std::size_t i) -> float& {
        return lg[(static_cast<std::size_t>(k) * static_cast<std::size_t>(classes) + static_cast<std::size_t>(c)) * plane + i];
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = px(x, y);
            const int own = corrupted[i];
            // Shared (aleatoric) softening at class boundaries.
            int other = -1;
            const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
            for (const auto& n : nb) {
                if (n[0] < 0 || n[0] >= w || n[1] < 0 || n[1] >= h) continue;
                const int c = corrupted[px(n[0], n[1])];
                if (c != own) {
                    other = c;
                    break;
                }
            }
            const Clutter* cl = nullptr;
            for (const auto& c : clutters)
                if (c.rect.contains(x, y)) cl = &c;
            const Patch* patch = patch_at[i] >= 0 ? &patches[static_cast<std::size_t>(patch_at[i])] : nullptr;
            const std::int32_t truth = labels[i];

            for (int k = 0; k < k_count; ++k) {
                if (patch && patch->kind == PatchKind::flip && truth != kVoidLabel) {
                    const double wk = patch->member_weight[static_cast<std::size_t>(k)];
                    logit(k, patch->other_class, i) += static_cast<float>(kLogitScale * wk);
                    logit(k, truth, i) += static_cast<float>(kLogitScale * (1.0 - wk));
                } else if (patch && patch->kind == PatchKind::doubt && truth != kVoidLabel) {
                    const double vk = patch->member_weight[static_cast<std::size_t>(k)];
                    logit(k, truth, i) += static_cast<float>(kLogitScale);
                    logit(k, patch->other_class, i) += static_cast<float>(kLogitScale * vk);
                } else if (cl) {
                    const int c = cl->member_class[static_cast<std::size_t>(k)][static_cast<std::size_t>(cl->cell_index(x, y))];
                    logit(k, c, i) += static_cast<float>(kLogitScale);
                } else if (other >= 0) {
                    logit(k, own, i) += static_cast<float>(kLogitScale * kBoundaryOwnWeight);
                    logit(k, other, i) += static_cast<float>(kLogitScale * (1.0 - kBoundaryOwnWeight));
                } else {
                    logit(k, own, i) += static_cast<float>(kLogitScale);
                }
            }
        }
    }
    // Shared noise is aleatoric; the smaller per-member part is what the
    // ensemble disagrees on.
    SplitMix64 nrng = stream(kLogitNoise);
    const double shared_sigma = 0.1 + 0.3 * sev;
    const double member_sigma = 0.02 + 0.08 * sev;
    const std::size_t per_member = static_cast<std::size_t>(classes) * plane;
    std::vector<float> shared(per_member);
    for (auto& v : shared) v = static_cast<float>(shared_sigma * nrng.normal());
    for (std::size_t i = 0; i < lg.size(); ++i)
        lg[i] += shared[i % per_member] + static_cast<float>(member_sigma * nrng.normal());

    // ---- patch embeddings [D, Hp, Wp] from the true semantics ----
    const auto protos = class_prototypes(cfg);
    const int ps = cfg.patch_size, d = cfg.embed_dim;
    const int hp = (h + ps - 1) / ps, wp = (w + ps - 1) / ps;
    b.patch_embeddings = ArrayF32({static_cast<std::size_t>(d), static_cast<std::size_t>(hp), static_cast<std::size_t>(wp)});
    SplitMix64 erng = stream(kEmbedding);
    std::vector<double> acc(static_cast<std::size_t>(d));
    for (int gy = 0; gy < hp; ++gy) {
        for (int gx = 0; gx < wp; ++gx) {
            std::fill(acc.begin(), acc.end(), 0.0);
            int count = 0;
            for (int y = gy * ps; y < std::min(h, (gy + 1) * ps); ++y) {
                for (int x = gx * ps; x < std::min(w, (gx + 1) * ps); ++x) {
                    const std::size_t i = px(x, y);
                    const std::int32_t t = labels[i];
                    const auto& proto = protos[static_cast<std::size_t>(t == kVoidLabel ? classes : t)];
                    double shift = 0.0;
                    const Patch* patch = patch_at[i] >= 0 ? &patches[static_cast<std::size_t>(patch_at[i])] : nullptr;
                    if (patch && patch->kind == PatchKind::flip && t != kVoidLabel) shift = 0.7 * sev * patch->embed_shift;
                    const auto& wrong = protos[static_cast<std::size_t>(patch ? patch->other_class : 0)];
                    for (int c = 0; c < d; ++c)
                        acc[static_cast<std::size_t>(c)] += (1.0 - shift) * proto[static_cast<std::size_t>(c)] +
                                                            shift * wrong[static_cast<std::size_t>(c)];
                    ++count;
                }
            }
            for (int c = 0; c < d; ++c) {
                const double v = acc[static_cast<std::size_t>(c)] / count + kEmbedNoise * erng.normal();
                b.patch_embeddings.data[(static_cast<std::size_t>(c) * static_cast<std::size_t>(hp) + static_cast<std::size_t>(gy)) *
                                            static_cast<std::size_t>(wp) + static_cast<std::size_t>(gx)] = static_cast<float>(v);
            }
        }
    }

    b.global_feature = ArrayF32({static_cast<std::size_t>(d)});
    const std::size_t grid = static_cast<std::size_t>(hp * wp);
    for (int c = 0; c < d; ++c) {
        double s = 0.0;
        for (std::size_t g = 0; g < grid; ++g) s += b.patch_embeddings.data[static_cast<std::size_t>(c) * grid + g];
        b.global_feature.data[static_cast<std::size_t>(c)] = static_cast<float>(s / static_cast<double>(grid));
    }

    b.labels = ArrayI32({static_cast<std::size_t>(h), static_cast<std::size_t>(w)}, std::move(labels));
    return b;
}

int bank_scene_count(const SynthConfig& cfg) {
    const int n = static_cast<int>(std::ceil(cfg.bank_fraction * cfg.scene_count - 1e-9));
    return std::clamp(n, 1, cfg.scene_count - 1);
}

Manifest generate_dataset(const SynthConfig& cfg, const fs::path& out_dir, int jobs) {
    validate_synth_config(cfg);
    fs::create_directories(out_dir);
    Manifest m;
    m.class_count = cfg.class_count;
    m.void_label = kVoidLabel;
    m.patch_size = cfg.patch_size;
    m.root = out_dir;
    const int bank = bank_scene_count(cfg);
    for (int i = 0; i < cfg.scene_count; ++i) {
        const std::string id = synth_scene_id(i);
        const std::string dir = "scenes/" + id + "/";
        m.scenes.push_back({id, dir + "logits.npy", dir + "patch_embeddings.npy", dir + "global_feature.npy",
                            dir + "labels.npy"});
        (i < bank ? m.bank_split : m.eval_split).push_back(id);
    }
    parallel_for(static_cast<std::size_t>(cfg.scene_count), jobs, [&](std::size_t i) {
        write_bundle(generate_scene(cfg, static_cast<int>(i)), m.scenes[i], out_dir);
    });
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

}  // namespace gatedseg
