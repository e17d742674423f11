#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gatedseg/gating.hpp"
#include "gatedseg/stats.hpp"

namespace gatedseg {

/// Mean IoU over the non-void classes present in `gt`; void gt pixels count
/// toward neither intersection nor union. All-void gt scores 1.
double region_iou(std::span<const std::int32_t> pred, std::span<const std::int32_t> gt, std::size_t class_count,
                  std::int32_t void_label = kVoidLabel);

/// Extracts the box from a full-image [H, W] label map, row-major.
std::vector<std::int32_t> crop_labels(std::span<const std::int32_t> full, std::size_t width, const BBox& box);

inline constexpr double kFailureThreshold = -0.20;

struct RegionRecord {
    std::string region_id;
    std::string scene_id;
    BBox bbox;
    std::size_t area = 0;
    double score = 0.0;
    GateMetrics metrics;
    bool passed_gate = false;
    double base_iou = 0.0;
    double fused_iou = 0.0;   // region fused on its own with its retrieved matches
    double delta_iou = 0.0;   // fused - base
    bool success = false;     // delta > 0

    bool operator==(const RegionRecord&) const = default;
};

/// Records produced by one pipeline run under `policy`.
struct RunRecords {
    std::string policy;
    std::vector<RegionRecord> records;

    bool operator==(const RunRecords&) const = default;
};

std::string run_records_to_json(const RunRecords& run);
RunRecords run_records_from_json(const std::string& text);

struct GroupSummary {
    std::size_t count = 0;
    double mean_delta = 0.0;
    double mean_base_iou = 0.0;
    double mean_fused_iou = 0.0;
    double relative_improvement = 0.0;  // mean_fused / mean_base - 1 (0 when base is 0)
    double success_rate = 0.0;

    bool operator==(const GroupSummary&) const = default;
};

GroupSummary summarize(std::span<const RegionRecord* const> records);

struct BucketSummary {
    std::string label;
    double lo = 0.0, hi = 0.0;
    bool lo_inclusive = true, hi_inclusive = false;
    GroupSummary all;     // every record in the bucket (always-on view)
    GroupSummary gated;   // records the policy passed

    bool operator==(const BucketSummary&) const = default;
};

struct FailureSummary {
    std::size_t count = 0;
    double mean_base_iou = 0.0;
    double mean_similarity = 0.0;
    std::vector<std::string> region_ids;

    bool operator==(const FailureSummary&) const = default;
};

struct CostSummary {
    std::size_t retrieved = 0;
    std::size_t total = 0;
    double fraction = 0.0;
    double reduction_vs_always_on = 0.0;

    bool operator==(const CostSummary&) const = default;
};

struct CurvePoint {
    std::string signal;
    double fraction = 0.0;
    std::size_t retrieved = 0;
    double mean_delta_targeted = 0.0;
    double mean_delta_all = 0.0;  // untargeted regions contribute 0

    bool operator==(const CurvePoint&) const = default;
};

struct EvalReport {
    std::string policy;
    std::vector<RegionRecord> records;
    std::vector<CorrelationResult> correlations;
    std::optional<StratificationResult> stratification;
    CostSummary cost;
    GroupSummary policy_summary;
    GroupSummary always_on_summary;
    std::vector<BucketSummary> buckets;
    FailureSummary failures;
    std::vector<CurvePoint> cost_curve;

    bool operator==(const EvalReport&) const = default;
};

EvalReport evaluate(const RunRecords& run);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

/// Writes report.json, regions.csv, and plots/*.csv under `out_dir`.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

/// Fixed 9-significant-digit float formatting used in every CSV.
std::string format_float(double v);

}  // namespace gatedseg
