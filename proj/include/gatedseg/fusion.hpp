#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gatedseg/regions.hpp"
#include "gatedseg/retrieval.hpp"
#include "gatedseg/uncertainty.hpp"

namespace gatedseg {

struct FusionConfig {
    double lambda_max = 0.5;
    double temperature = 0.1;
    double label_smoothing = 0.0;
};

/// Dense [C, h, w] probability crop.
struct ProbCrop {
    std::size_t classes = 0, height = 0, width = 0;
    std::vector<float> values;

    ProbCrop() = default;
    ProbCrop(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
        : classes(c), height(h), width(w), values(c * h * w, fill) {}
    float& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
    float at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
    bool operator==(const ProbCrop&) const = default;
};

/// Smoothed one-hot per labelled pixel; void pixels become uniform.
ProbCrop label_to_prob(const ArrayI32& label_crop, std::size_t class_count, double smoothing,
                       std::int32_t void_label = kVoidLabel);

/// Nearest neighbour: source index = floor((i + 0.5) * src / dst), clamped.
ProbCrop resize_nearest(const ProbCrop& crop, std::size_t height, std::size_t width);

/// A retrieved match paired with its probability crop, already resized to
/// the query box.
struct ScoredCrop {
    double similarity = 0.0;
    ProbCrop probs;
};

/// Similarity-weighted convex blend of base and retrieved maps inside one box.
ProbCrop fuse_region(const ProbCrop& base, std::span<const ScoredCrop> matches, const FusionConfig& cfg);

ProbCrop crop_probs(const ProbMap& map, const BBox& box);
void paste_probs(ProbMap& map, const BBox& box, const ProbCrop& crop);

/// Resolves match label crops from `bank` into ScoredCrops sized to `box`.
std::vector<ScoredCrop> matched_crops(const MemoryBank& bank, std::span<const RetrievalMatch> matches,
                                      const BBox& box, std::size_t class_count, const FusionConfig& cfg);

struct FusionDecision {
    RegionProposal region;
    std::vector<ScoredCrop> matches;
};

/// Fuses every decision into a copy of `base`, in descending order of best
/// match similarity (region_id ascending on ties); later regions read the
/// already-fused probabilities where boxes overlap.
ProbMap apply_fusion(const ProbMap& base, std::span<const FusionDecision> decisions, const FusionConfig& cfg);

}  // namespace gatedseg
