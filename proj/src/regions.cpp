#include "gatedseg/regions.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "gatedseg/error.hpp"
#include "gatedseg/stats.hpp"

namespace gatedseg {

Threshold percentile_threshold(const UncertaintyMap& map, double q) {
    if (map.values.empty()) throw ArgumentError("percentile_threshold: empty map");
    std::vector<double> v(map.values.begin(), map.values.end());
    Threshold t;
    t.value = percentile(v, q);
    t.mask = BinaryMask(map.height, map.width);
    for (std::size_t i = 0; i < v.size(); ++i) t.mask.bits[i] = v[i] >= t.value ? 1 : 0;
    return t;
}

namespace {

std::int32_t find_root(std::vector<std::int32_t>& parent, std::int32_t a) {
    while (parent[a] != a) {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    return a;
}

void unite(std::vector<std::int32_t>& parent, std::int32_t a, std::int32_t b) {
    a = find_root(parent, a);
    b = find_root(parent, b);
    if (a == b) return;
    // Smaller provisional label wins so roots stay in raster order.
    if (a < b)
        parent[b] = a;
    else
        parent[a] = b;
}

}  // namespace

// Two-pass union-find over provisional labels.
ComponentLabels connected_components(const BinaryMask& mask) {
    const auto h = static_cast<long>(mask.height), w = static_cast<long>(mask.width);
    ComponentLabels out;
    out.height = mask.height;
    out.width = mask.width;
    out.ids.assign(mask.bits.size(), -1);
    std::vector<std::int32_t> parent;

    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            if (!mask.bits[y * w + x]) continue;
            std::int32_t label = -1;
            // Already-visited 8-neighbours: W, NW, N, NE.
            const long nbr[4][2] = {{x - 1, y}, {x - 1, y - 1}, {x, y - 1}, {x + 1, y - 1}};
            for (const auto& n : nbr) {
                if (n[0] < 0 || n[0] >= w || n[1] < 0) continue;
                std::int32_t l = out.ids[n[1] * w + n[0]];
                if (l < 0) continue;
                if (label < 0)
                    label = l;
                else
                    unite(parent, label, l);
            }
            if (label < 0) {
                label = static_cast<std::int32_t>(parent.size());
                parent.push_back(label);
            }
            out.ids[y * w + x] = label;
        }
    }

    // Provisional labels are created in raster order and roots are minimal,
    // so numbering roots by first appearance yields raster-ordered ids.
    std::vector<std::int32_t> final_id(parent.size(), -1);
    std::int32_t next = 0;
    for (auto& id : out.ids) {
        if (id < 0) continue;
        std::int32_t r = find_root(parent, id);
        if (final_id[r] < 0) final_id[r] = next++;
        id = final_id[r];
    }
    out.count = static_cast<std::size_t>(next);
    return out;
}

std::vector<RegionProposal> extract_regions(const UncertaintyMap& map, double q, std::size_t min_area,
                                            const std::string& scene_id) {
    Threshold t = percentile_threshold(map, q);
    ComponentLabels cc = connected_components(t.mask);
    const auto w = static_cast<int>(map.width);

    struct Acc {
        BBox box{1 << 30, 1 << 30, -1, -1};
        std::size_t area = 0;
        double sum = 0.0;
        std::size_t first = 0;
    };
    std::vector<Acc> acc(cc.count);
    for (std::size_t i = 0; i < cc.ids.size(); ++i) {
        std::int32_t id = cc.ids[i];
        if (id < 0) continue;
        Acc& a = acc[id];
        int x = static_cast<int>(i) % w, y = static_cast<int>(i) / w;
        if (a.area == 0) a.first = i;
        a.box.x0 = std::min(a.box.x0, x);
        a.box.y0 = std::min(a.box.y0, y);
        a.box.x1 = std::max(a.box.x1, x);
        a.box.y1 = std::max(a.box.y1, y);
        ++a.area;
        a.sum += map.values[i];
    }

    std::vector<RegionProposal> regions;
    for (std::size_t id = 0; id < acc.size(); ++id) {
        const Acc& a = acc[id];
        if (a.area < min_area) continue;
        RegionProposal r;
        r.bbox = a.box;
        r.area = a.area;
        r.score = a.sum / static_cast<double>(a.area);
        r.first_pixel = a.first;
        r.mask.assign(static_cast<std::size_t>(a.box.width() * a.box.height()), 0);
        for (int y = a.box.y0; y <= a.box.y1; ++y)
            for (int x = a.box.x0; x <= a.box.x1; ++x)
                if (cc.ids[static_cast<std::size_t>(y * w + x)] == static_cast<std::int32_t>(id))
                    r.mask[static_cast<std::size_t>((y - a.box.y0) * a.box.width() + (x - a.box.x0))] = 1;
        regions.push_back(std::move(r));
    }
    std::stable_sort(regions.begin(), regions.end(), [](const RegionProposal& a, const RegionProposal& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.first_pixel < b.first_pixel;
    });
    for (std::size_t i = 0; i < regions.size(); ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "/r%03zu", i);
        regions[i].region_id = scene_id + buf;
    }
    return regions;
}

}  // namespace gatedseg
