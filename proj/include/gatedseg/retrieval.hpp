#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gatedseg/regions.hpp"
#include "gatedseg/store.hpp"
#include "gatedseg/uncertainty.hpp"

namespace gatedseg {

/// Unit-norm region descriptor.
struct RegionFeature {
    std::string region_id;
    std::vector<float> vector;

    bool operator==(const RegionFeature&) const = default;
};

double dot(std::span<const float> a, std::span<const float> b);
double cosine_similarity(std::span<const float> a, std::span<const float> b);
/// Returns a unit-norm copy; throws ValidationError on a zero vector.
std::vector<float> l2_normalized(std::span<const float> v);

/// Single-bin RoI Align: the box is mapped to patch-grid coordinates
/// (pixel / patch_size, patch i sitting at coordinate i), sampled bilinearly
/// at the 2x2 points {1/4, 3/4} of its extent with edge clamping, averaged
/// and L2-normalized.
RegionFeature roi_align(const ArrayF32& patches, const BBox& bbox, int patch_size, std::string region_id = {});

struct BankEntry {
    std::string scene_id;
    std::string region_id;
    RegionFeature feature;
    BBox bbox;
    ArrayI32 label_crop;  // [h, w] ground truth inside bbox
    double source_uncertainty = 0.0;

    bool operator==(const BankEntry&) const = default;
};

struct BankScene {
    std::string scene_id;
    std::vector<float> global_feature;  // unit norm
    bool operator==(const BankScene&) const = default;
};

struct MemoryBank {
    int class_count = 0;
    std::size_t embed_dim = 0;
    UncertaintyKind uncertainty_kind = UncertaintyKind::mutual_information;
    std::vector<BankScene> scenes;
    std::vector<BankEntry> entries;  // grouped by scene, scene order

    bool operator==(const MemoryBank&) const = default;
};

inline constexpr double kDefaultKeepFraction = 0.25;
inline constexpr std::size_t kDefaultTopImages = 50;
inline constexpr std::size_t kDefaultTopRegions = 5;

struct BankBuildParams {
    UncertaintyKind uncertainty_kind = UncertaintyKind::mutual_information;
    double keep_fraction = kDefaultKeepFraction;
    double percentile = kDefaultPercentile;
    std::size_t min_area = kDefaultMinArea;
    int patch_size = 14;
    int class_count = 0;
};

/// Number of regions retained from a scene with `n` regions.
std::size_t retained_count(std::size_t n, double keep_fraction);

/// Lowest-uncertainty regions of one scene as bank entries.
std::vector<BankEntry> bank_entries_for_scene(const SceneBundle& scene, const UncertaintySet& maps,
                                              const BankBuildParams& params);

MemoryBank build_bank(std::span<const SceneBundle> scenes, const BankBuildParams& params);

inline constexpr const char* kBankVersion = "1";

void save_bank(const MemoryBank& bank, const std::filesystem::path& dir);
MemoryBank load_bank(const std::filesystem::path& dir);

struct RetrievalMatch {
    std::size_t entry_index = 0;  // into MemoryBank::entries
    double region_similarity = 0.0;
    double global_similarity = 0.0;

    bool operator==(const RetrievalMatch&) const = default;
};

/// Global-feature stage keeps the `top_images` most similar bank scenes,
/// then the `top_regions` most similar entries among them are returned,
/// best first. Ties: scene_id then region_id ascending.
std::vector<RetrievalMatch> query_hierarchical(const MemoryBank& bank, std::span<const float> query_global,
                                               const RegionFeature& query_region,
                                               std::size_t top_images = kDefaultTopImages,
                                               std::size_t top_regions = kDefaultTopRegions);

}  // namespace gatedseg
