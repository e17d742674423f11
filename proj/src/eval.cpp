#include "gatedseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "gatedseg/error.hpp"
#include "gatedseg/tensor.hpp"

namespace gatedseg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

double region_iou(std::span<const std::int32_t> pred, std::span<const std::int32_t> gt, std::size_t class_count,
                  std::int32_t void_label) {
    if (pred.size() != gt.size()) throw ArgumentError("region_iou: crop shapes differ");
    std::vector<std::size_t> inter(class_count, 0), uni(class_count, 0);
    std::vector<bool> present(class_count, false);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const std::int32_t g = gt[i];
        if (g == void_label || g < 0 || static_cast<std::size_t>(g) >= class_count) continue;
        const std::int32_t p = pred[i];
        present[static_cast<std::size_t>(g)] = true;
        ++uni[static_cast<std::size_t>(g)];
        if (p == g) {
            ++inter[static_cast<std::size_t>(g)];
        } else if (p >= 0 && static_cast<std::size_t>(p) < class_count) {
            ++uni[static_cast<std::size_t>(p)];
        }
    }
    double sum = 0.0;
    std::size_t classes = 0;
    for (std::size_t c = 0; c < class_count; ++c) {
        if (!present[c]) continue;
        sum += static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
        ++classes;
    }
    return classes == 0 ? 1.0 : sum / static_cast<double>(classes);
}

std::vector<std::int32_t> crop_labels(std::span<const std::int32_t> full, std::size_t width, const BBox& box) {
    std::vector<std::int32_t> out;
    out.reserve(static_cast<std::size_t>(box.width() * box.height()));
    for (int y = box.y0; y <= box.y1; ++y)
        for (int x = box.x0; x <= box.x1; ++x)
            out.push_back(full[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)]);
    return out;
}

// ---- JSON ------------------------------------------------------------------

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

json to_j(const GateMetrics& m) {
    return {{"region_id", m.region_id},   {"mean_mi", m.mean_mi},
            {"mean_entropy", m.mean_entropy}, {"mean_epkl", m.mean_epkl},
            {"max_prob", m.max_prob},     {"margin", m.margin},
            {"best_similarity", opt(m.best_similarity)}, {"base_iou", opt(m.base_iou)},
            {"combined_oracle", opt(m.combined_oracle)}};
}
GateMetrics metrics_from(const json& j) {
    GateMetrics m;
    m.region_id = j.at("region_id").get<std::string>();
    m.mean_mi = j.at("mean_mi").get<double>();
    m.mean_entropy = j.at("mean_entropy").get<double>();
    m.mean_epkl = j.at("mean_epkl").get<double>();
    m.max_prob = j.at("max_prob").get<double>();
    m.margin = j.at("margin").get<double>();
    m.best_similarity = opt_from(j, "best_similarity");
    m.base_iou = opt_from(j, "base_iou");
    m.combined_oracle = opt_from(j, "combined_oracle");
    return m;
}

json to_j(const RegionRecord& r) {
    return {{"region_id", r.region_id},
            {"scene_id", r.scene_id},
            {"bbox", {r.bbox.x0, r.bbox.y0, r.bbox.x1, r.bbox.y1}},
            {"area", r.area},
            {"score", r.score},
            {"metrics", to_j(r.metrics)},
            {"passed_gate", r.passed_gate},
            {"base_iou", r.base_iou},
            {"fused_iou", r.fused_iou},
            {"delta_iou", r.delta_iou},
            {"success", r.success}};
}
RegionRecord record_from(const json& j) {
    RegionRecord r;
    r.region_id = j.at("region_id").get<std::string>();
    r.scene_id = j.at("scene_id").get<std::string>();
    const auto& b = j.at("bbox");
    r.bbox = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
    r.area = j.at("area").get<std::size_t>();
    r.score = j.at("score").get<double>();
    r.metrics = metrics_from(j.at("metrics"));
    r.passed_gate = j.at("passed_gate").get<bool>();
    r.base_iou = j.at("base_iou").get<double>();
    r.fused_iou = j.at("fused_iou").get<double>();
    r.delta_iou = j.at("delta_iou").get<double>();
    r.success = j.at("success").get<bool>();
    return r;
}

json to_j(const CorrelationResult& c) { return {{"metric", c.metric}, {"r", c.r}, {"p", c.p}, {"n", c.n}}; }
CorrelationResult corr_from(const json& j) {
    return {j.at("metric").get<std::string>(), j.at("r").get<double>(), j.at("p").get<double>(),
            j.at("n").get<std::size_t>()};
}

json to_j(const GroupSummary& g) {
    return {{"count", g.count},
            {"mean_delta", g.mean_delta},
            {"mean_base_iou", g.mean_base_iou},
            {"mean_fused_iou", g.mean_fused_iou},
            {"relative_improvement", g.relative_improvement},
            {"success_rate", g.success_rate}};
}
GroupSummary group_from(const json& j) {
    GroupSummary g;
    g.count = j.at("count").get<std::size_t>();
    g.mean_delta = j.at("mean_delta").get<double>();
    g.mean_base_iou = j.at("mean_base_iou").get<double>();
    g.mean_fused_iou = j.at("mean_fused_iou").get<double>();
    g.relative_improvement = j.at("relative_improvement").get<double>();
    g.success_rate = j.at("success_rate").get<double>();
    return g;
}

json records_json(const std::vector<RegionRecord>& records) {
    json a = json::array();
    for (const auto& r : records) a.push_back(to_j(r));
    return a;
}
std::vector<RegionRecord> records_from(const json& a) {
    std::vector<RegionRecord> out;
    for (const auto& r : a) out.push_back(record_from(r));
    return out;
}

template <class F>
auto guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw FormatError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

std::string run_records_to_json(const RunRecords& run) {
    json j;
    j["policy"] = run.policy;
    j["records"] = records_json(run.records);
    return j.dump(2) + "\n";
}

RunRecords run_records_from_json(const std::string& text) {
    return guarded("records.json", [&] {
        json j = json::parse(text);
        RunRecords run;
        run.policy = j.at("policy").get<std::string>();
        run.records = records_from(j.at("records"));
        return run;
    });
}

// ---- aggregation ------------------------------------------------------------

GroupSummary summarize(std::span<const RegionRecord* const> records) {
    GroupSummary g;
    g.count = records.size();
    if (records.empty()) return g;
    std::size_t wins = 0;
    for (const auto* r : records) {
        g.mean_delta += r->delta_iou;
        g.mean_base_iou += r->base_iou;
        g.mean_fused_iou += r->fused_iou;
        wins += r->success ? 1 : 0;
    }
    const double n = static_cast<double>(records.size());
    g.mean_delta /= n;
    g.mean_base_iou /= n;
    g.mean_fused_iou /= n;
    g.success_rate = static_cast<double>(wins) / n;
    g.relative_improvement = g.mean_base_iou > 0.0 ? g.mean_fused_iou / g.mean_base_iou - 1.0 : 0.0;
    return g;
}

namespace {

std::optional<CorrelationResult> try_pearson(const std::vector<double>& xs, const std::vector<double>& ys,
                                             const std::string& name) {
    if (xs.size() < 3) return std::nullopt;
    try {
        return pearson(xs, ys, name);
    } catch (const ValidationError&) {
        return std::nullopt;
    }
}

}  // namespace

EvalReport evaluate(const RunRecords& run) {
    if (run.records.empty()) throw ArgumentError("evaluate: no region records");
    EvalReport rep;
    rep.policy = run.policy;
    rep.records = run.records;
    const auto& recs = rep.records;
    const std::size_t n = recs.size();

    // Regions that had retrieval executed (a best match exists).
    std::vector<const RegionRecord*> retrieved, passed, all;
    for (const auto& r : recs) {
        all.push_back(&r);
        if (r.metrics.best_similarity) retrieved.push_back(&r);
        if (r.passed_gate) passed.push_back(&r);
    }

    for (const auto& name : metric_names()) {
        std::vector<double> xs, ys;
        for (const auto* r : retrieved) {
            auto v = metric_value(r->metrics, name);
            if (!v) continue;
            xs.push_back(*v);
            ys.push_back(r->delta_iou);
        }
        if (auto c = try_pearson(xs, ys, name)) rep.correlations.push_back(*c);
    }

    if (n >= 4) {
        std::vector<GateMetrics> pop;
        for (const auto& r : recs) pop.push_back(r.metrics);
        StratificationResult s = stratify_by_mi(pop);
        for (int q = 1; q <= 4; ++q) {
            std::vector<double> xs, ys;
            for (std::size_t i = 0; i < n; ++i) {
                if (s.quartile[i] != q || !recs[i].metrics.best_similarity) continue;
                xs.push_back(*recs[i].metrics.best_similarity);
                ys.push_back(recs[i].delta_iou);
            }
            s.similarity_correlation[static_cast<std::size_t>(q - 1)] =
                try_pearson(xs, ys, "best_similarity@Q" + std::to_string(q));
        }
        rep.stratification = std::move(s);
    }

    rep.cost.retrieved = passed.size();
    rep.cost.total = n;
    rep.cost.fraction = static_cast<double>(passed.size()) / static_cast<double>(n);
    rep.cost.reduction_vs_always_on = 1.0 - rep.cost.fraction;

    rep.policy_summary = summarize(passed);
    rep.always_on_summary = summarize(retrieved);

    struct Range {
        const char* label;
        double lo, hi;
        bool lo_inc, hi_inc;
    };
    const Range ranges[] = {{"base_iou<0.2", 0.0, 0.2, true, false},
                            {"0.2<=base_iou<=0.8", 0.2, 0.8, true, true},
                            {"base_iou>0.8", 0.8, 1.0, false, true}};
    for (const auto& range : ranges) {
        std::vector<const RegionRecord*> in_all, in_gated;
        for (const auto& r : recs) {
            const double b = r.base_iou;
            const bool above = range.lo_inc ? b >= range.lo : b > range.lo;
            const bool below = range.hi_inc ? b <= range.hi : b < range.hi;
            if (!(above && below)) continue;
            in_all.push_back(&r);
            if (r.passed_gate) in_gated.push_back(&r);
        }
        rep.buckets.push_back({range.label, range.lo, range.hi, range.lo_inc, range.hi_inc, summarize(in_all),
                               summarize(in_gated)});
    }

    double sim_sum = 0.0;
    std::size_t sim_n = 0;
    for (const auto& r : recs) {
        if (!(r.delta_iou < kFailureThreshold)) continue;
        ++rep.failures.count;
        rep.failures.mean_base_iou += r.base_iou;
        rep.failures.region_ids.push_back(r.region_id);
        if (r.metrics.best_similarity) {
            sim_sum += *r.metrics.best_similarity;
            ++sim_n;
        }
    }
    if (rep.failures.count) rep.failures.mean_base_iou /= static_cast<double>(rep.failures.count);
    if (sim_n) rep.failures.mean_similarity = sim_sum / static_cast<double>(sim_n);

    // Cost-vs-improvement: gate the top fraction by each signal.
    std::vector<std::string> signals = {"best_similarity", "mean_mi", "margin"};
    bool oracle = std::all_of(recs.begin(), recs.end(), [](const RegionRecord& r) { return r.metrics.combined_oracle.has_value(); });
    if (oracle) signals.push_back("combined_oracle");
    for (const auto& sig : signals) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::vector<std::optional<double>> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = metric_value(recs[i].metrics, sig);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (v[a].has_value() != v[b].has_value()) return v[a].has_value();
            if (v[a] && *v[a] != *v[b]) return *v[a] > *v[b];
            return recs[a].region_id < recs[b].region_id;
        });
        for (int step = 1; step <= 20; ++step) {
            CurvePoint pt;
            pt.signal = sig;
            pt.fraction = step / 20.0;
            pt.retrieved = static_cast<std::size_t>(std::floor(pt.fraction * static_cast<double>(n) + 1e-9));
            double sum = 0.0;
            for (std::size_t k = 0; k < pt.retrieved; ++k) sum += recs[order[k]].delta_iou;
            pt.mean_delta_targeted = pt.retrieved ? sum / static_cast<double>(pt.retrieved) : 0.0;
            pt.mean_delta_all = sum / static_cast<double>(n);
            rep.cost_curve.push_back(pt);
        }
    }
    return rep;
}

// ---- report (de)serialization ----------------------------------------------------

std::string report_to_json(const EvalReport& rep) {
    json j;
    j["policy"] = rep.policy;
    j["region_count"] = rep.records.size();
    j["cost"] = {{"retrieved", rep.cost.retrieved},
                 {"total", rep.cost.total},
                 {"fraction", rep.cost.fraction},
                 {"reduction_vs_always_on", rep.cost.reduction_vs_always_on}};
    j["policy_summary"] = to_j(rep.policy_summary);
    j["always_on_summary"] = to_j(rep.always_on_summary);
    json corr = json::array();
    for (const auto& c : rep.correlations) corr.push_back(to_j(c));
    j["correlations"] = corr;
    if (rep.stratification) {
        const auto& s = *rep.stratification;
        json qc = json::array();
        for (const auto& c : s.similarity_correlation) qc.push_back(c ? to_j(*c) : json(nullptr));
        j["stratification"] = {{"cuts", s.cuts},
                               {"counts", s.counts},
                               {"quartile", s.quartile},
                               {"similarity_correlation", qc}};
    } else {
        j["stratification"] = nullptr;
    }
    json buckets = json::array();
    for (const auto& b : rep.buckets) {
        buckets.push_back({{"label", b.label},
                           {"lo", b.lo},
                           {"hi", b.hi},
                           {"lo_inclusive", b.lo_inclusive},
                           {"hi_inclusive", b.hi_inclusive},
                           {"all", to_j(b.all)},
                           {"gated", to_j(b.gated)}});
    }
    j["buckets"] = buckets;
    j["failures"] = {{"threshold", kFailureThreshold},
                     {"count", rep.failures.count},
                     {"mean_base_iou", rep.failures.mean_base_iou},
                     {"mean_similarity", rep.failures.mean_similarity},
                     {"region_ids", rep.failures.region_ids}};
    json curve = json::array();
    for (const auto& p : rep.cost_curve) {
        curve.push_back({{"signal", p.signal},
                         {"fraction", p.fraction},
                         {"retrieved", p.retrieved},
                         {"mean_delta_targeted", p.mean_delta_targeted},
                         {"mean_delta_all", p.mean_delta_all}});
    }
    j["cost_curve"] = curve;
    j["records"] = records_json(rep.records);
    return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
    return guarded("report.json", [&] {
        json j = json::parse(text);
        EvalReport rep;
        rep.policy = j.at("policy").get<std::string>();
        const auto& c = j.at("cost");
        rep.cost = {c.at("retrieved").get<std::size_t>(), c.at("total").get<std::size_t>(),
                    c.at("fraction").get<double>(), c.at("reduction_vs_always_on").get<double>()};
        rep.policy_summary = group_from(j.at("policy_summary"));
        rep.always_on_summary = group_from(j.at("always_on_summary"));
        for (const auto& x : j.at("correlations")) rep.correlations.push_back(corr_from(x));
        if (!j.at("stratification").is_null()) {
            const auto& sj = j.at("stratification");
            StratificationResult s;
            s.cuts = sj.at("cuts").get<std::array<double, 3>>();
            s.counts = sj.at("counts").get<std::array<std::size_t, 4>>();
            s.quartile = sj.at("quartile").get<std::vector<int>>();
            const auto& qc = sj.at("similarity_correlation");
            for (std::size_t q = 0; q < 4; ++q)
                if (!qc.at(q).is_null()) s.similarity_correlation[q] = corr_from(qc.at(q));
            rep.stratification = std::move(s);
        }
        for (const auto& b : j.at("buckets")) {
            rep.buckets.push_back({b.at("label").get<std::string>(), b.at("lo").get<double>(), b.at("hi").get<double>(),
                                   b.at("lo_inclusive").get<bool>(), b.at("hi_inclusive").get<bool>(),
                                   group_from(b.at("all")), group_from(b.at("gated"))});
        }
        const auto& f = j.at("failures");
        rep.failures.count = f.at("count").get<std::size_t>();
        rep.failures.mean_base_iou = f.at("mean_base_iou").get<double>();
        rep.failures.mean_similarity = f.at("mean_similarity").get<double>();
        rep.failures.region_ids = f.at("region_ids").get<std::vector<std::string>>();
        for (const auto& p : j.at("cost_curve")) {
            rep.cost_curve.push_back({p.at("signal").get<std::string>(), p.at("fraction").get<double>(),
                                      p.at("retrieved").get<std::size_t>(), p.at("mean_delta_targeted").get<double>(),
                                      p.at("mean_delta_all").get<double>()});
        }
        rep.records = records_from(j.at("records"));
        return rep;
    });
}

std::string format_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_float(*v) : std::string(); }

}  // namespace

void emit_report(const EvalReport& rep, const fs::path& out_dir) {
    fs::create_directories(out_dir / "plots");
    write_text_file(out_dir / "report.json", report_to_json(rep));

    const std::map<std::string, int> quartile_of_region = [&] {
        std::map<std::string, int> m;
        if (rep.stratification)
            for (std::size_t i = 0; i < rep.records.size(); ++i)
                m[rep.records[i].region_id] = rep.stratification->quartile[i];
        return m;
    }();

    std::ostringstream csv;
    csv << "region_id,scene_id,x0,y0,x1,y1,area,score,quartile,passed_gate,base_iou,fused_iou,delta_iou,success,"
           "mean_mi,mean_entropy,mean_epkl,max_prob,margin,best_similarity,combined_oracle\n";
    for (const auto& r : rep.records) {
        auto q = quartile_of_region.find(r.region_id);
        const auto& m = r.metrics;
        csv << r.region_id << ',' << r.scene_id << ',' << r.bbox.x0 << ',' << r.bbox.y0 << ',' << r.bbox.x1 << ','
            << r.bbox.y1 << ',' << r.area << ',' << format_float(r.score) << ','
            << (q == quartile_of_region.end() ? 0 : q->second) << ',' << (r.passed_gate ? 1 : 0) << ','
            << format_float(r.base_iou) << ',' << format_float(r.fused_iou) << ',' << format_float(r.delta_iou)
            << ',' << (r.success ? 1 : 0) << ',' << format_float(m.mean_mi) << ',' << format_float(m.mean_entropy)
            << ',' << format_float(m.mean_epkl) << ',' << format_float(m.max_prob) << ',' << format_float(m.margin)
            << ',' << cell(m.best_similarity) << ',' << cell(m.combined_oracle) << '\n';
    }
    write_text_file(out_dir / "regions.csv", csv.str());

    std::ostringstream scatter;
    scatter << "region_id,metric,value,delta_iou\n";
    for (const auto& name : metric_names()) {
        if (name == "base_iou") continue;
        for (const auto& r : rep.records) {
            auto v = metric_value(r.metrics, name);
            if (!v) continue;
            scatter << r.region_id << ',' << name << ',' << format_float(*v) << ',' << format_float(r.delta_iou)
                    << '\n';
        }
    }
    write_text_file(out_dir / "plots" / "metric_vs_delta.csv", scatter.str());

    std::ostringstream quart;
    quart << "quartile,lo,hi,count,r,p,n\n";
    if (rep.stratification) {
        const auto& s = *rep.stratification;
        const double inf = std::numeric_limits<double>::infinity();
        const double lo[4] = {-inf, s.cuts[0], s.cuts[1], s.cuts[2]};
        const double hi[4] = {s.cuts[0], s.cuts[1], s.cuts[2], inf};
        for (std::size_t q = 0; q < 4; ++q) {
            const auto& c = s.similarity_correlation[q];
            quart << 'Q' << q + 1 << ',' << format_float(lo[q]) << ',' << format_float(hi[q]) << ',' << s.counts[q]
                  << ',' << (c ? format_float(c->r) : "") << ',' << (c ? format_float(c->p) : "") << ','
                  << (c ? std::to_string(c->n) : "") << '\n';
        }
    }
    write_text_file(out_dir / "plots" / "quartile_correlation.csv", quart.str());

    std::ostringstream curve;
    curve << "signal,fraction,retrieved,mean_delta_targeted,mean_delta_all\n";
    for (const auto& p : rep.cost_curve)
        curve << p.signal << ',' << format_float(p.fraction) << ',' << p.retrieved << ','
              << format_float(p.mean_delta_targeted) << ',' << format_float(p.mean_delta_all) << '\n';
    write_text_file(out_dir / "plots" / "cost_curve.csv", curve.str());

    std::ostringstream corr;
    corr << "metric,r,p,n\n";
    for (const auto& c : rep.correlations)
        corr << c.metric << ',' << format_float(c.r) << ',' << format_float(c.p) << ',' << c.n << '\n';
    write_text_file(out_dir / "plots" / "correlations.csv", corr.str());
}

}  // namespace gatedseg
