#include "gatedseg/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gatedseg/error.hpp"

namespace gatedseg {

ProbCrop label_to_prob(const ArrayI32& label_crop, std::size_t class_count, double smoothing,
                       std::int32_t void_label) {
    if (label_crop.rank() != 2) throw ArgumentError("label_to_prob: label crop must be [h, w]");
    if (class_count < 2) throw ArgumentError("label_to_prob: need at least 2 classes");
    const std::size_t h = label_crop.dim(0), w = label_crop.dim(1);
    const auto on = static_cast<float>(1.0 - smoothing);
    const auto off = static_cast<float>(smoothing / static_cast<double>(class_count - 1));
    const auto uniform = static_cast<float>(1.0 / static_cast<double>(class_count));
    ProbCrop out(class_count, h, w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::int32_t l = label_crop.data[y * w + x];
            const bool known = l != void_label && l >= 0 && static_cast<std::size_t>(l) < class_count;
            for (std::size_t c = 0; c < class_count; ++c)
                out.at(c, y, x) = known ? (static_cast<std::size_t>(l) == c ? on : off) : uniform;
        }
    }
    return out;
}

ProbCrop resize_nearest(const ProbCrop& crop, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw ArgumentError("resize_nearest: target extent must be >= 1");
    if (crop.height == 0 || crop.width == 0) throw ArgumentError("resize_nearest: empty source");
    auto source_index = [](std::size_t i, std::size_t src, std::size_t dst) {
        auto s = static_cast<std::size_t>(std::floor((static_cast<double>(i) + 0.5) * static_cast<double>(src) /
                                                     static_cast<double>(dst)));
        return std::min(s, src - 1);
    };
    ProbCrop out(crop.classes, height, width);
    for (std::size_t y = 0; y < height; ++y) {
        const std::size_t sy = source_index(y, crop.height, height);
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t sx = source_index(x, crop.width, width);
            for (std::size_t c = 0; c < crop.classes; ++c) out.at(c, y, x) = crop.at(c, sy, sx);
        }
    }
    return out;
}

ProbCrop fuse_region(const ProbCrop& base, std::span<const ScoredCrop> matches, const FusionConfig& cfg) {
    if (matches.empty()) throw ArgumentError("fuse_region: no matches to fuse");
    if (!(cfg.temperature > 0.0)) throw ArgumentError("fuse_region: temperature must be > 0");
    for (const auto& m : matches) {
        if (m.probs.classes != base.classes || m.probs.height != base.height || m.probs.width != base.width)
            throw ArgumentError("fuse_region: match crop not resized to the query box");
    }

    std::vector<double> s(matches.size());
    for (std::size_t i = 0; i < matches.size(); ++i) s[i] = std::max(0.0, matches[i].similarity);
    const double s_max = *std::max_element(s.begin(), s.end());
    std::vector<double> weight(matches.size());
    double z = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        weight[i] = std::exp((s[i] - s_max) / cfg.temperature);
        z += weight[i];
    }
    for (auto& w : weight) w /= z;
    const double alpha = cfg.lambda_max * s_max;
    if (alpha == 0.0) return base;

    ProbCrop out(base.classes, base.height, base.width);
    const std::size_t plane = base.height * base.width;
    std::vector<double> mix(base.classes);
    for (std::size_t p = 0; p < plane; ++p) {
        double total = 0.0;
        for (std::size_t c = 0; c < base.classes; ++c) {
            double retrieved = 0.0;
            for (std::size_t i = 0; i < matches.size(); ++i) retrieved += weight[i] * matches[i].probs.values[c * plane + p];
            mix[c] = (1.0 - alpha) * base.values[c * plane + p] + alpha * retrieved;
            total += mix[c];
        }
        for (std::size_t c = 0; c < base.classes; ++c)
            out.values[c * plane + p] = static_cast<float>(total > 0.0 ? mix[c] / total : mix[c]);
    }
    return out;
}

ProbCrop crop_probs(const ProbMap& map, const BBox& box) {
    ProbCrop out(map.classes, static_cast<std::size_t>(box.height()), static_cast<std::size_t>(box.width()));
    for (std::size_t c = 0; c < map.classes; ++c)
        for (int y = box.y0; y <= box.y1; ++y)
            for (int x = box.x0; x <= box.x1; ++x)
                out.at(c, static_cast<std::size_t>(y - box.y0), static_cast<std::size_t>(x - box.x0)) =
                    map.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    return out;
}

void paste_probs(ProbMap& map, const BBox& box, const ProbCrop& crop) {
    for (std::size_t c = 0; c < map.classes; ++c)
        for (int y = box.y0; y <= box.y1; ++y)
            for (int x = box.x0; x <= box.x1; ++x)
                map.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
                    crop.at(c, static_cast<std::size_t>(y - box.y0), static_cast<std::size_t>(x - box.x0));
}

std::vector<ScoredCrop> matched_crops(const MemoryBank& bank, std::span<const RetrievalMatch> matches,
                                      const BBox& box, std::size_t class_count, const FusionConfig& cfg) {
    std::vector<ScoredCrop> out;
    out.reserve(matches.size());
    for (const auto& m : matches) {
        const BankEntry& e = bank.entries.at(m.entry_index);
        ProbCrop q = label_to_prob(e.label_crop, class_count, cfg.label_smoothing);
        out.push_back({m.region_similarity, resize_nearest(q, static_cast<std::size_t>(box.height()),
                                                           static_cast<std::size_t>(box.width()))});
    }
    return out;
}

ProbMap apply_fusion(const ProbMap& base, std::span<const FusionDecision> decisions, const FusionConfig& cfg) {
    ProbMap out = base;
    auto best = [](const FusionDecision& d) {
        double b = -1e300;
        for (const auto& m : d.matches) b = std::max(b, m.similarity);
        return b;
    };
    std::vector<std::size_t> order(decisions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = best(decisions[a]), sb = best(decisions[b]);
        if (sa != sb) return sa > sb;
        return decisions[a].region.region_id < decisions[b].region.region_id;
    });
    for (std::size_t i : order) {
        const auto& d = decisions[i];
        if (d.matches.empty()) continue;
        const BBox& box = d.region.bbox;
        if (box.x0 < 0 || box.y0 < 0 || box.x1 >= static_cast<int>(base.width) || box.y1 >= static_cast<int>(base.height))
            throw ArgumentError("apply_fusion: region box outside the image");
        paste_probs(out, box, fuse_region(crop_probs(out, box), d.matches, cfg));
    }
    return out;
}

}  // namespace gatedseg
