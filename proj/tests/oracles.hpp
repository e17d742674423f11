// Straight-loop reference implementations used as test oracles. Written
// independently of src/ and kept deliberately naive.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

using ld = long double;

// p[k][c] for one pixel.
inline ld entropy(const std::vector<ld>& p) {
    ld h = 0;
    for (ld v : p)
        if (v > 0) h -= v * std::log(v);
    return h;
}

inline std::vector<ld> softmax(const std::vector<ld>& z) {
    ld m = *std::max_element(z.begin(), z.end());
    std::vector<ld> e(z.size());
    ld s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (e[i] = std::exp(z[i] - m));
    for (auto& v : e) v /= s;
    return e;
}

inline std::vector<ld> mean_of(const std::vector<std::vector<ld>>& members) {
    std::vector<ld> m(members[0].size(), 0);
    for (const auto& p : members)
        for (std::size_t c = 0; c < p.size(); ++c) m[c] += p[c];
    for (auto& v : m) v /= static_cast<ld>(members.size());
    return m;
}

inline ld predictive_entropy(const std::vector<std::vector<ld>>& members) { return entropy(mean_of(members)); }

inline ld mutual_information(const std::vector<std::vector<ld>>& members) {
    ld avg = 0;
    for (const auto& p : members) avg += entropy(p);
    return entropy(mean_of(members)) - avg / static_cast<ld>(members.size());
}

inline ld kl(const std::vector<ld>& p, const std::vector<ld>& q) {
    ld s = 0;
    for (std::size_t c = 0; c < p.size(); ++c)
        if (p[c] > 0) s += p[c] * std::log(p[c] / q[c]);
    return s;
}

inline ld epkl(const std::vector<std::vector<ld>>& members) {
    ld s = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < members.size(); ++i)
        for (std::size_t j = 0; j < members.size(); ++j)
            if (i != j) {
                s += kl(members[i], members[j]);
                ++pairs;
            }
    return s / static_cast<ld>(pairs);
}

// Breadth-first flood fill, 8-connected. Returns each component as a sorted
// set of raster indices.
inline std::set<std::set<std::size_t>> flood_fill(const std::vector<std::uint8_t>& mask, int h, int w) {
    std::vector<bool> seen(mask.size(), false);
    std::set<std::set<std::size_t>> out;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::size_t start = static_cast<std::size_t>(y * w + x);
            if (!mask[start] || seen[start]) continue;
            std::set<std::size_t> comp;
            std::deque<std::pair<int, int>> q{{x, y}};
            seen[start] = true;
            while (!q.empty()) {
                auto [cx, cy] = q.front();
                q.pop_front();
                comp.insert(static_cast<std::size_t>(cy * w + cx));
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        std::size_t n = static_cast<std::size_t>(ny * w + nx);
                        if (mask[n] && !seen[n]) {
                            seen[n] = true;
                            q.emplace_back(nx, ny);
                        }
                    }
            }
            out.insert(std::move(comp));
        }
    return out;
}

inline ld cosine(const std::vector<float>& a, const std::vector<float>& b) {
    ld ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += static_cast<ld>(a[i]) * b[i];
        aa += static_cast<ld>(a[i]) * a[i];
        bb += static_cast<ld>(b[i]) * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

// Per-class IoU by explicit pixel sets.
inline double region_iou(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& gt, int classes,
                         int void_label) {
    std::set<int> present;
    for (auto g : gt)
        if (g != void_label) present.insert(g);
    if (present.empty()) return 1.0;
    double sum = 0;
    for (int c : present) {
        if (c >= classes) continue;
        std::set<std::size_t> p, g;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (gt[i] == void_label) continue;
            if (pred[i] == c) p.insert(i);
            if (gt[i] == c) g.insert(i);
        }
        std::set<std::size_t> inter, uni;
        std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::inserter(inter, inter.end()));
        std::set_union(p.begin(), p.end(), g.begin(), g.end(), std::inserter(uni, uni.end()));
        sum += static_cast<double>(inter.size()) / static_cast<double>(uni.size());
    }
    return sum / static_cast<double>(present.size());
}

// Textbook single-pass sums formula.
inline ld pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
    const ld n = static_cast<ld>(x.size());
    ld sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += static_cast<ld>(x[i]) * x[i];
        syy += static_cast<ld>(y[i]) * y[i];
        sxy += static_cast<ld>(x[i]) * y[i];
    }
    return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// Two-sided Student-t p-value in 50-digit arithmetic.
inline double t_two_sided_p(double r, std::size_t n) {
    using big = boost::multiprecision::cpp_bin_float_50;
    const big rr = r;
    const big df = static_cast<double>(n - 2);
    const big t = rr * boost::multiprecision::sqrt(df / (big(1) - rr * rr));
    boost::math::students_t_distribution<big> dist(df);
    return static_cast<double>(2 * boost::math::cdf(boost::math::complement(dist, boost::multiprecision::abs(t))));
}

// Linear-interpolated percentile, written from the definition.
inline double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double rank = (static_cast<double>(v.size()) - 1.0) * q / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = static_cast<std::size_t>(std::ceil(rank));
    return v[lo] + (v[hi] - v[lo]) * (rank - static_cast<double>(lo));
}

}  // namespace oracle

namespace testing_support {

// Unique scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        static std::random_device rd;
        path = std::filesystem::temp_directory_path() /
               ("gatedseg_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testing_support
