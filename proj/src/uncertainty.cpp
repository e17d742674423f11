#include "gatedseg/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include "gatedseg/error.hpp"

namespace gatedseg {

namespace {

void check_members(std::span<const ProbMap> members, const char* op) {
    if (members.size() < 2) throw ArgumentError(std::string(op) + ": need at least 2 ensemble members");
    const ProbMap& first = members.front();
    for (const auto& m : members) {
        if (m.classes != first.classes || m.height != first.height || m.width != first.width)
            throw ArgumentError(std::string(op) + ": ensemble members differ in shape");
    }
}

inline double safe_log(double p) { return std::log(std::max(p, kProbEpsilon)); }

double pixel_entropy(const ProbMap& p, std::size_t pixel) {
    const std::size_t n = p.pixels();
    double h = 0.0;
    for (std::size_t c = 0; c < p.classes; ++c) {
        double v = p.values[c * n + pixel];
        h -= v * safe_log(v);
    }
    return h;
}

UncertaintyMap blank(UncertaintyKind kind, const ProbMap& like) {
    UncertaintyMap u;
    u.kind = kind;
    u.height = like.height;
    u.width = like.width;
    u.values.assign(like.pixels(), 0.0f);
    return u;
}

}  // namespace

const char* uncertainty_kind_name(UncertaintyKind kind) {
    switch (kind) {
        case UncertaintyKind::entropy: return "entropy";
        case UncertaintyKind::mutual_information: return "mutual_information";
        case UncertaintyKind::epkl: return "epkl";
    }
    return "?";
}

UncertaintyKind parse_uncertainty_kind(const std::string& name) {
    if (name == "entropy") return UncertaintyKind::entropy;
    if (name == "mutual_information" || name == "mi") return UncertaintyKind::mutual_information;
    if (name == "epkl") return UncertaintyKind::epkl;
    throw ConfigError("unknown uncertainty kind '" + name + "'");
}

std::vector<ProbMap> softmax_logits(const ArrayF32& logits) {
    if (logits.rank() != 4) throw ArgumentError("softmax_logits: expected [K, C, H, W] logits");
    const std::size_t k_count = logits.dim(0), classes = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    const std::size_t n = h * w;
    std::vector<ProbMap> out;
    out.reserve(k_count);
    std::vector<double> e(classes);
    for (std::size_t k = 0; k < k_count; ++k) {
        ProbMap p(classes, h, w);
        const float* src = logits.data.data() + k * classes * n;
        for (std::size_t i = 0; i < n; ++i) {
            double mx = src[i];
            for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(src[c * n + i]));
            double sum = 0.0;
            for (std::size_t c = 0; c < classes; ++c) {
                e[c] = std::exp(static_cast<double>(src[c * n + i]) - mx);
                sum += e[c];
            }
            for (std::size_t c = 0; c < classes; ++c) p.values[c * n + i] = static_cast<float>(e[c] / sum);
        }
        out.push_back(std::move(p));
    }
    return out;
}

ProbMap ensemble_mean(std::span<const ProbMap> members) {
    check_members(members, "ensemble_mean");
    const ProbMap& first = members.front();
    ProbMap mean(first.classes, first.height, first.width);
    const double inv = 1.0 / static_cast<double>(members.size());
    for (std::size_t i = 0; i < mean.values.size(); ++i) {
        double s = 0.0;
        for (const auto& m : members) s += m.values[i];
        mean.values[i] = static_cast<float>(s * inv);
    }
    return mean;
}

UncertaintyMap predictive_entropy(const ProbMap& mean) {
    UncertaintyMap u = blank(UncertaintyKind::entropy, mean);
    for (std::size_t i = 0; i < mean.pixels(); ++i) u.values[i] = static_cast<float>(pixel_entropy(mean, i));
    return u;
}

UncertaintyMap mutual_information(std::span<const ProbMap> members) {
    check_members(members, "mutual_information");
    const ProbMap& first = members.front();
    const std::size_t n = first.pixels(), classes = first.classes;
    const double inv = 1.0 / static_cast<double>(members.size());
    UncertaintyMap u = blank(UncertaintyKind::mutual_information, first);
    for (std::size_t i = 0; i < n; ++i) {
        double h_mean = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            double s = 0.0;
            for (const auto& m : members) s += m.values[c * n + i];
            double p = s * inv;
            h_mean -= p * safe_log(p);
        }
        double h_members = 0.0;
        for (const auto& m : members) h_members += pixel_entropy(m, i);
        u.values[i] = static_cast<float>(std::max(0.0, h_mean - h_members * inv));
    }
    return u;
}

UncertaintyMap epkl(std::span<const ProbMap> members) {
    check_members(members, "epkl");
    const ProbMap& first = members.front();
    const std::size_t n = first.pixels(), classes = first.classes, k_count = members.size();
    const double pairs = static_cast<double>(k_count * (k_count - 1));
    UncertaintyMap u = blank(UncertaintyKind::epkl, first);
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (std::size_t a = 0; a < k_count; ++a) {
            for (std::size_t b = 0; b < k_count; ++b) {
                if (a == b) continue;
                double kl = 0.0;
                for (std::size_t c = 0; c < classes; ++c) {
                    double p = members[a].values[c * n + i];
                    double q = members[b].values[c * n + i];
                    kl += p * (safe_log(p) - safe_log(q));
                }
                total += kl;
            }
        }
        u.values[i] = static_cast<float>(std::max(0.0, total / pairs));
    }
    return u;
}

const UncertaintyMap& UncertaintySet::get(UncertaintyKind kind) const {
    switch (kind) {
        case UncertaintyKind::entropy: return entropy;
        case UncertaintyKind::mutual_information: return mutual_information;
        case UncertaintyKind::epkl: return epkl;
    }
    return mutual_information;
}

UncertaintySet compute_uncertainty(const ArrayF32& logits) {
    UncertaintySet s;
    s.members = softmax_logits(logits);
    s.mean = ensemble_mean(s.members);
    s.entropy = predictive_entropy(s.mean);
    s.mutual_information = gatedseg::mutual_information(s.members);
    s.epkl = gatedseg::epkl(s.members);
    return s;
}

std::vector<std::int32_t> argmax_labels(const ProbMap& probs) {
    const std::size_t n = probs.pixels();
    std::vector<std::int32_t> out(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        float best = probs.values[i];
        std::int32_t arg = 0;
        for (std::size_t c = 1; c < probs.classes; ++c) {
            float v = probs.values[c * n + i];
            if (v > best) {
                best = v;
                arg = static_cast<std::int32_t>(c);
            }
        }
        out[i] = arg;
    }
    return out;
}

}  // namespace gatedseg
