#include "gatedseg/gating.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "gatedseg/error.hpp"
#include "gatedseg/eval.hpp"

namespace gatedseg {

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {
        "mean_mi",  "mean_entropy",      "mean_epkl", "max_prob",        "margin",
        "mi_x_inv_max_prob", "mi_x_epkl", "best_similarity", "base_iou", "combined_oracle"};
    return names;
}

std::optional<double> metric_value(const GateMetrics& m, const std::string& name) {
    if (name == "mean_mi") return m.mean_mi;
    if (name == "mean_entropy") return m.mean_entropy;
    if (name == "mean_epkl") return m.mean_epkl;
    if (name == "max_prob") return m.max_prob;
    if (name == "margin") return m.margin;
    if (name == "mi_x_inv_max_prob") return m.mean_mi * (1.0 - m.max_prob);
    if (name == "mi_x_epkl") return m.mean_mi * m.mean_epkl;
    if (name == "best_similarity") return m.best_similarity;
    if (name == "base_iou") return m.base_iou;
    if (name == "combined_oracle") return m.combined_oracle;
    throw ConfigError("unknown metric '" + name + "'");
}

GateMetrics compute_metrics(const RegionProposal& region, const UncertaintySet& maps,
                            std::span<const std::int32_t> base_pred, const ArrayI32* labels,
                            UncertaintyKind oracle_kind, int void_label) {
    const ProbMap& mean = maps.mean;
    const std::size_t w = mean.width, n = mean.pixels();
    if (base_pred.size() != n) throw ArgumentError("compute_metrics: base prediction size mismatch");

    GateMetrics m;
    m.region_id = region.region_id;
    double mi = 0, ent = 0, ep = 0, maxp = 0, margin = 0;
    std::size_t count = 0;
    for (int y = region.bbox.y0; y <= region.bbox.y1; ++y) {
        for (int x = region.bbox.x0; x <= region.bbox.x1; ++x) {
            if (!region.in_mask(x, y)) continue;
            const std::size_t i = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
            mi += maps.mutual_information.values[i];
            ent += maps.entropy.values[i];
            ep += maps.epkl.values[i];
            double top1 = -1.0, top2 = -1.0;
            for (std::size_t c = 0; c < mean.classes; ++c) {
                const double p = mean.values[c * n + i];
                if (p > top1) {
                    top2 = top1;
                    top1 = p;
                } else if (p > top2) {
                    top2 = p;
                }
            }
            maxp += top1;
            margin += top1 - top2;
            ++count;
        }
    }
    if (count == 0) throw ArgumentError("compute_metrics: region mask is empty");
    const double inv = 1.0 / static_cast<double>(count);
    m.mean_mi = mi * inv;
    m.mean_entropy = ent * inv;
    m.mean_epkl = ep * inv;
    m.max_prob = maxp * inv;
    m.margin = margin * inv;

    if (labels) {
        if (labels->data.size() != n) throw ArgumentError("compute_metrics: label map size mismatch");
        auto pred = crop_labels(base_pred, w, region.bbox);
        auto gt = crop_labels(labels->data, w, region.bbox);
        m.base_iou = region_iou(pred, gt, mean.classes, void_label);
        const double u = oracle_kind == UncertaintyKind::entropy ? m.mean_entropy
                         : oracle_kind == UncertaintyKind::epkl  ? m.mean_epkl
                                                                 : m.mean_mi;
        m.combined_oracle = u * (1.0 - *m.base_iou);
    }
    return m;
}

int quartile_of(double mi, const std::array<double, 3>& cuts) {
    if (mi >= cuts[2]) return 4;
    if (mi > cuts[1]) return 3;
    if (mi >= cuts[0]) return 2;
    return 1;
}

StratificationResult stratify_by_mi(std::span<const GateMetrics> population) {
    if (population.size() < 4) throw ArgumentError("stratify_by_mi: need at least 4 regions");
    std::vector<double> mi;
    mi.reserve(population.size());
    for (const auto& m : population) mi.push_back(m.mean_mi);
    StratificationResult s;
    s.cuts = {percentile(mi, 25.0), percentile(mi, 50.0), percentile(mi, 75.0)};
    s.quartile.reserve(mi.size());
    for (double v : mi) {
        const int q = quartile_of(v, s.cuts);
        s.quartile.push_back(q);
        ++s.counts[static_cast<std::size_t>(q - 1)];
    }
    return s;
}

std::string GatePolicy::name() const {
    switch (kind) {
        case PolicyKind::two_stage: return "two_stage";
        case PolicyKind::always_on: return "always_on";
        case PolicyKind::never: return "never";
        case PolicyKind::oracle_combined_top25: return "oracle_combined_top25";
        case PolicyKind::topk_by: {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%g", fraction);
            return "topk_by:" + metric + ":" + buf + (ascending ? ":asc" : "");
        }
    }
    return "?";
}

GatePolicy parse_policy(const std::string& text) {
    GatePolicy p;
    if (text == "two_stage") return p;
    if (text == "always_on") {
        p.kind = PolicyKind::always_on;
        return p;
    }
    if (text == "never") {
        p.kind = PolicyKind::never;
        return p;
    }
    if (text == "oracle_combined_top25") {
        p.kind = PolicyKind::oracle_combined_top25;
        return p;
    }
    if (text.rfind("topk_by:", 0) == 0) {
        p.kind = PolicyKind::topk_by;
        std::vector<std::string> parts;
        std::size_t start = 0;
        while (true) {
            std::size_t colon = text.find(':', start);
            parts.push_back(text.substr(start, colon - start));
            if (colon == std::string::npos) break;
            start = colon + 1;
        }
        if (parts.size() < 3 || parts.size() > 4 || (parts.size() == 4 && parts[3] != "asc"))
            throw ConfigError("policy must look like topk_by:<metric>:<fraction>[:asc], got '" + text + "'");
        p.metric = parts[1];
        metric_value(GateMetrics{}, p.metric);  // validates the name
        try {
            p.fraction = std::stod(parts[2]);
        } catch (const std::exception&) {
            throw ConfigError("bad fraction in policy '" + text + "'");
        }
        if (!(p.fraction >= 0.0 && p.fraction <= 1.0)) throw ConfigError("policy fraction must lie in [0, 1]");
        p.ascending = parts.size() == 4;
        return p;
    }
    throw ConfigError("unknown gate policy '" + text + "'");
}

namespace {

// Indices of `candidates` ordered by value (desc unless ascending), missing
// values last, region_id ascending on ties.
std::vector<std::size_t> rank_by(std::span<const GateMetrics> population, std::vector<std::size_t> candidates,
                                 const std::vector<std::optional<double>>& value, bool ascending) {
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        const auto& va = value[a];
        const auto& vb = value[b];
        if (va.has_value() != vb.has_value()) return va.has_value();
        if (va && *va != *vb) return ascending ? *va < *vb : *va > *vb;
        return population[a].region_id < population[b].region_id;
    });
    return candidates;
}

std::size_t floor_fraction(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

}  // namespace

std::vector<GateDecision> gate(const GatePolicy& policy, std::span<const GateMetrics> population,
                               const MatchProvider& provider) {
    const std::size_t n = population.size();
    std::vector<GateDecision> out(n);
    const std::string name = policy.name();
    for (std::size_t i = 0; i < n; ++i) {
        out[i].region_id = population[i].region_id;
        out[i].policy = name;
        out[i].metrics = population[i];
    }
    auto fetch = [&](std::size_t i) {
        out[i].matches = provider(i);
        if (!out[i].matches.empty()) out[i].metrics.best_similarity = out[i].matches.front().region_similarity;
    };
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);

    switch (policy.kind) {
        case PolicyKind::never:
            break;
        case PolicyKind::always_on:
            for (std::size_t i = 0; i < n; ++i) {
                out[i].stage1_passed = true;
                fetch(i);
                out[i].passed = !out[i].matches.empty();
            }
            break;
        case PolicyKind::two_stage: {
            const auto strat = stratify_by_mi(population);
            std::vector<std::size_t> survivors;
            for (std::size_t i = 0; i < n; ++i) {
                if (strat.quartile[i] != 3) continue;
                out[i].stage1_passed = true;
                fetch(i);
                survivors.push_back(i);
            }
            std::vector<std::optional<double>> sim(n);
            for (std::size_t i : survivors) sim[i] = out[i].metrics.best_similarity;
            const auto ranked = rank_by(population, survivors, sim, false);
            const std::size_t keep = survivors.size() / 2;
            for (std::size_t r = 0; r < keep; ++r) {
                const std::size_t i = ranked[r];
                out[i].passed = !out[i].matches.empty();
            }
            break;
        }
        case PolicyKind::oracle_combined_top25:
        case PolicyKind::topk_by: {
            const bool oracle = policy.kind == PolicyKind::oracle_combined_top25;
            const std::string metric = oracle ? "combined_oracle" : policy.metric;
            const double fraction = oracle ? 0.25 : policy.fraction;
            if (oracle) {
                for (const auto& m : population)
                    if (!m.combined_oracle)
                        throw ArgumentError("oracle_combined_top25 needs ground truth for every region");
            }
            if (metric == "best_similarity")
                for (std::size_t i = 0; i < n; ++i) fetch(i);
            std::vector<std::optional<double>> value(n);
            for (std::size_t i = 0; i < n; ++i) value[i] = metric_value(out[i].metrics, metric);
            const auto ranked = rank_by(population, all, value, !oracle && policy.ascending);
            const std::size_t keep = floor_fraction(fraction, n);
            for (std::size_t r = 0; r < keep; ++r) {
                const std::size_t i = ranked[r];
                out[i].stage1_passed = true;
                if (out[i].matches.empty()) fetch(i);
                out[i].passed = !out[i].matches.empty();
            }
            for (auto& d : out)
                if (!d.stage1_passed) d.matches.clear();
            break;
        }
    }
    return out;
}

}  // namespace gatedseg
