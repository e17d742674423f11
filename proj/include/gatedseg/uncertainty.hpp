#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gatedseg/tensor.hpp"

namespace gatedseg {

/// Probability clamp applied before every logarithm.
inline constexpr double kProbEpsilon = 1e-12;

/// Per-pixel class distributions, layout [C, H, W].
struct ProbMap {
    std::size_t classes = 0, height = 0, width = 0;
    std::vector<float> values;

    ProbMap() = default;
    ProbMap(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
        : classes(c), height(h), width(w), values(c * h * w, fill) {}

    std::size_t pixels() const { return height * width; }
    float& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
    float at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }

    bool operator==(const ProbMap&) const = default;
};

enum class UncertaintyKind { entropy, mutual_information, epkl };

const char* uncertainty_kind_name(UncertaintyKind kind);
UncertaintyKind parse_uncertainty_kind(const std::string& name);

/// Per-pixel scalar map, layout [H, W].
struct UncertaintyMap {
    UncertaintyKind kind = UncertaintyKind::mutual_information;
    std::size_t height = 0, width = 0;
    std::vector<float> values;

    float at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// Softmax over C of each member of a [K, C, H, W] logit tensor.
std::vector<ProbMap> softmax_logits(const ArrayF32& logits);

ProbMap ensemble_mean(std::span<const ProbMap> members);

/// H[p] = -sum_c p_c ln p_c of the ensemble mean.
UncertaintyMap predictive_entropy(const ProbMap& mean);

/// H[mean] - mean_k H[p_k], clamped at zero.
UncertaintyMap mutual_information(std::span<const ProbMap> members);

/// Mean KL(p_i || p_j) over the K(K-1) ordered member pairs.
UncertaintyMap epkl(std::span<const ProbMap> members);

/// All three maps plus the mean, computed once per scene.
struct UncertaintySet {
    std::vector<ProbMap> members;
    ProbMap mean;
    UncertaintyMap entropy;
    UncertaintyMap mutual_information;
    UncertaintyMap epkl;

    const UncertaintyMap& get(UncertaintyKind kind) const;
};

UncertaintySet compute_uncertainty(const ArrayF32& logits);

/// Argmax over classes of each pixel; ties go to the lowest class index.
std::vector<std::int32_t> argmax_labels(const ProbMap& probs);

}  // namespace gatedseg
