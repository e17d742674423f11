#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gatedseg/uncertainty.hpp"

namespace gatedseg {

/// Inclusive pixel box.
struct BBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
    bool operator==(const BBox&) const = default;
};

/// Row-major boolean image.
struct BinaryMask {
    std::size_t height = 0, width = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}
    bool at(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
    void set(std::size_t y, std::size_t x, bool v = true) { bits[y * width + x] = v ? 1 : 0; }
    bool operator==(const BinaryMask&) const = default;
};

struct Threshold {
    double value = 0.0;
    BinaryMask mask;
};

/// Pixels with value >= the q-th percentile of the whole map.
Threshold percentile_threshold(const UncertaintyMap& map, double q);

/// Component ids per pixel: -1 for background, 0..count-1 otherwise, ids in
/// raster order of each component's first pixel.
struct ComponentLabels {
    std::size_t height = 0, width = 0;
    std::vector<std::int32_t> ids;
    std::size_t count = 0;
};

/// 8-connected labeling.
ComponentLabels connected_components(const BinaryMask& mask);

struct RegionProposal {
    std::string region_id;
    BBox bbox;
    /// Component membership inside `bbox`, row-major, bbox.height() x bbox.width().
    std::vector<std::uint8_t> mask;
    std::size_t area = 0;
    /// Mean uncertainty over the component pixels.
    double score = 0.0;
    /// Raster index of the component's first pixel; tie-break for ordering.
    std::size_t first_pixel = 0;

    bool in_mask(int x, int y) const {
        return bbox.contains(x, y) && mask[static_cast<std::size_t>((y - bbox.y0) * bbox.width() + (x - bbox.x0))];
    }
    bool operator==(const RegionProposal&) const = default;
};

inline constexpr double kDefaultPercentile = 75.0;
inline constexpr std::size_t kDefaultMinArea = 100;

/// Threshold, label, drop components smaller than `min_area`, and sort by
/// score descending. Region ids are `<scene_id>/r<ordinal>` in output order.
std::vector<RegionProposal> extract_regions(const UncertaintyMap& map, double q = kDefaultPercentile,
                                            std::size_t min_area = kDefaultMinArea,
                                            const std::string& scene_id = "scene");

}  // namespace gatedseg
