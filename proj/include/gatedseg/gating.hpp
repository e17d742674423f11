#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gatedseg/regions.hpp"
#include "gatedseg/retrieval.hpp"
#include "gatedseg/stats.hpp"
#include "gatedseg/uncertainty.hpp"

namespace gatedseg {

/// Every candidate gating signal for one region. Means are over the
/// region's component mask, not its box.
struct GateMetrics {
    std::string region_id;
    double mean_mi = 0.0;
    double mean_entropy = 0.0;
    double mean_epkl = 0.0;
    double max_prob = 0.0;  // of the ensemble mean
    double margin = 0.0;    // top1 - top2 of the ensemble mean
    std::optional<double> best_similarity;
    std::optional<double> base_iou;         // needs ground truth
    std::optional<double> combined_oracle;  // uncertainty * (1 - base_iou)

    bool operator==(const GateMetrics&) const = default;
};

/// Names accepted by metric_value, in report order.
const std::vector<std::string>& metric_names();

/// Looks up a metric by name. Products: `mi_x_inv_max_prob` is
/// mean_mi * (1 - max_prob), `mi_x_epkl` is mean_mi * mean_epkl.
std::optional<double> metric_value(const GateMetrics& m, const std::string& name);

GateMetrics compute_metrics(const RegionProposal& region, const UncertaintySet& maps,
                            std::span<const std::int32_t> base_pred, const ArrayI32* labels,
                            UncertaintyKind oracle_kind = UncertaintyKind::mutual_information,
                            int void_label = kVoidLabel);

struct StratificationResult {
    std::array<double, 3> cuts{};              // 25th, 50th, 75th percentile of mean_mi
    std::vector<int> quartile;                 // 1..4 per population entry
    std::array<std::size_t, 4> counts{};
    std::array<std::optional<CorrelationResult>, 4> similarity_correlation;  // filled by eval

    bool operator==(const StratificationResult&) const = default;
};

/// Q1 = mi < c25, Q2 = [c25, c50], Q3 = (c50, c75), Q4 = mi >= c75.
int quartile_of(double mi, const std::array<double, 3>& cuts);

StratificationResult stratify_by_mi(std::span<const GateMetrics> population);

enum class PolicyKind { two_stage, always_on, never, oracle_combined_top25, topk_by };

struct GatePolicy {
    PolicyKind kind = PolicyKind::two_stage;
    std::string metric;        // topk_by only
    double fraction = 0.25;    // topk_by only
    bool ascending = false;    // topk_by: keep the lowest values instead

    std::string name() const;
};

/// Parses `two_stage`, `always_on`, `never`, `oracle_combined_top25`, or
/// `topk_by:<metric>:<fraction>[:asc]`.
GatePolicy parse_policy(const std::string& text);

struct GateDecision {
    std::string region_id;
    std::string policy;
    bool passed = false;
    bool stage1_passed = false;
    GateMetrics metrics;
    std::vector<RetrievalMatch> matches;

    bool operator==(const GateDecision&) const = default;
};

/// Retrieval for population entry i; only invoked for regions that need it.
using MatchProvider = std::function<std::vector<RetrievalMatch>(std::size_t)>;

std::vector<GateDecision> gate(const GatePolicy& policy, std::span<const GateMetrics> population,
                               const MatchProvider& matches);

}  // namespace gatedseg
