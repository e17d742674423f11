// Acceptance gate: one PASS/FAIL line per primary criterion. Exit status is
// nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gatedseg/config.hpp"
#include "gatedseg/eval.hpp"
#include "gatedseg/gating.hpp"
#include "gatedseg/pipeline.hpp"
#include "gatedseg/regions.hpp"
#include "gatedseg/retrieval.hpp"
#include "gatedseg/stats.hpp"
#include "gatedseg/synth.hpp"
#include "gatedseg/uncertainty.hpp"
#include "oracles.hpp"

using namespace gatedseg;
namespace fs = std::filesystem;

namespace {

// Tolerances and limits.
constexpr double kFormulaTol = 1e-6;
constexpr double kFormulaSeconds = 5.0;
constexpr double kComponentSeconds = 5.0;
constexpr double kRetrievalSeconds = 10.0;
constexpr double kSelfSimTol = 1e-6;
constexpr double kIouWorkedTol = 1e-6;
constexpr double kPearsonRTol = 1e-9;
constexpr double kPearsonPTol = 1e-6;
constexpr double kEndToEndSeconds = 120.0;
constexpr double kMinGatedDelta = 0.05;
constexpr double kMinSimilarityR = 0.15;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int g_failures = 0;

void criterion(const char* name, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %-28s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", name, secs, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++g_failures;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

bool six_decimals(double got, double want) { return std::llround(got * 1e6) == std::llround(want * 1e6); }

Outcome formula_oracles() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    double worst = 0;
    for (std::size_t k : {2u, 5u})
        for (std::size_t c : {2u, 19u}) {
            ArrayF32 logits({k, c, 20, 50});  // 1000 pixels
            std::normal_distribution<float> n(0.0f, 3.0f);
            for (auto& v : logits.data) v = n(rng);
            auto set = compute_uncertainty(logits);
            for (std::size_t p = 0; p < 1000; ++p) {
                std::vector<std::vector<oracle::ld>> members;
                for (std::size_t m = 0; m < k; ++m) {
                    std::vector<oracle::ld> z(c);
                    for (std::size_t j = 0; j < c; ++j) z[j] = logits.data[(m * c + j) * 1000 + p];
                    members.push_back(oracle::softmax(z));
                }
                worst = std::max({worst,
                                  std::abs(set.entropy.values[p] - static_cast<double>(oracle::predictive_entropy(members))),
                                  std::abs(set.mutual_information.values[p] - static_cast<double>(oracle::mutual_information(members))),
                                  std::abs(set.epkl.values[p] - static_cast<double>(oracle::epkl(members)))});
            }
        }
    ProbMap a(2, 1, 1), b(2, 1, 1);
    a.values = {0.9f, 0.1f};
    b.values = {0.5f, 0.5f};
    std::vector<ProbMap> pair{a, b};
    const double h = predictive_entropy(ensemble_mean(pair)).values[0];
    const double mi = mutual_information(pair).values[0];
    const double kl = epkl(pair).values[0];
    const bool worked = six_decimals(h, 0.610864) && six_decimals(mi, 0.101749) && six_decimals(kl, 0.439445);
    const double secs = elapsed(t0);
    std::ostringstream d;
    d << "max |diff| " << fmt("%.2e", worst) << "; worked " << fmt("%.6f", h) << " " << fmt("%.6f", mi) << " "
      << fmt("%.6f", kl);
    return {worst < kFormulaTol && worked && secs < kFormulaSeconds, d.str()};
}

Outcome components() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(202);
    int equal = 0;
    for (int t = 0; t < 100; ++t) {
        BinaryMask m(64, 64);
        std::bernoulli_distribution on(0.15 + 0.6 * (t % 10) / 9.0);
        for (auto& b : m.bits) b = on(rng) ? 1 : 0;
        auto cc = connected_components(m);
        std::vector<std::set<std::size_t>> comps(cc.count);
        for (std::size_t i = 0; i < cc.ids.size(); ++i)
            if (cc.ids[i] >= 0) comps[static_cast<std::size_t>(cc.ids[i])].insert(i);
        std::set<std::set<std::size_t>> got(comps.begin(), comps.end());
        if (got == oracle::flood_fill(m.bits, 64, 64) && got.size() == cc.count) ++equal;
    }
    const double secs = elapsed(t0);
    return {equal == 100 && secs < kComponentSeconds, std::to_string(equal) + "/100 masks equal flood fill"};
}

Outcome retrieval() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(303);
    auto unit = [&](std::size_t d) {
        std::normal_distribution<float> n;
        std::vector<float> v(d);
        for (auto& x : v) x = n(rng);
        return l2_normalized(v);
    };
    int equal = 0;
    double worst_self = 0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t scenes = 1 + rng() % 25, entries = scenes + rng() % (201 - scenes);
        MemoryBank bank;
        bank.class_count = 2;
        bank.embed_dim = 32;
        for (std::size_t s = 0; s < scenes; ++s) bank.scenes.push_back({"s" + std::to_string(1000 + s), unit(32)});
        for (std::size_t e = 0; e < entries; ++e) {
            BankEntry be;
            be.scene_id = bank.scenes[e * scenes / entries].scene_id;
            be.region_id = be.scene_id + "/r" + std::to_string(1000 + e);
            be.feature = {be.region_id, unit(32)};
            be.label_crop = ArrayI32({1, 1}, 0);
            bank.entries.push_back(std::move(be));
        }
        const auto qg = unit(32);
        const RegionFeature qr{"q", unit(32)};
        const std::size_t top = 1 + rng() % 10;
        auto got = query_hierarchical(bank, qg, qr, scenes + rng() % 5, top);
        std::vector<std::pair<oracle::ld, std::size_t>> flat;
        for (std::size_t i = 0; i < entries; ++i) flat.emplace_back(oracle::cosine(qr.vector, bank.entries[i].feature.vector), i);
        std::sort(flat.begin(), flat.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return bank.entries[a.second].region_id < bank.entries[b.second].region_id;
        });
        bool same = got.size() == std::min(top, entries);
        for (std::size_t i = 0; same && i < got.size(); ++i) same = got[i].entry_index == flat[i].second;
        equal += same ? 1 : 0;

        const std::size_t pick = rng() % entries;
        const auto& e = bank.entries[pick];
        const auto& g = std::find_if(bank.scenes.begin(), bank.scenes.end(), [&](const auto& s) { return s.scene_id == e.scene_id; })->global_feature;
        auto self = query_hierarchical(bank, g, e.feature, scenes, 1);
        worst_self = std::max(worst_self, std::abs(self.at(0).region_similarity - 1.0));
    }
    const double secs = elapsed(t0);
    return {equal == 50 && worst_self <= kSelfSimTol && secs < kRetrievalSeconds,
            std::to_string(equal) + "/50 banks equal flat search; self-query |1-s| " + fmt("%.1e", worst_self)};
}

Outcome gate_arithmetic() {
    std::mt19937_64 rng(404);
    std::vector<GateMetrics> pop(939);
    std::vector<double> sims(939);
    for (std::size_t i = 0; i < 939; ++i) {
        pop[i].region_id = "r" + std::to_string(10000 + i);
        pop[i].mean_mi = static_cast<double>(i) * 1e-3 + std::uniform_real_distribution<double>(0, 5e-4)(rng);
        sims[i] = std::uniform_real_distribution<double>(0, 1)(rng);
    }
    std::shuffle(pop.begin(), pop.end(), rng);
    const auto strat = stratify_by_mi(pop);
    auto d = gate(parse_policy("two_stage"), pop, [&](std::size_t i) {
        return std::vector<RetrievalMatch>{{i, sims[i], 0.0}};
    });
    RunRecords run;
    run.policy = "two_stage";
    for (std::size_t i = 0; i < d.size(); ++i) {
        RegionRecord r;
        r.region_id = d[i].region_id;
        r.metrics = d[i].metrics;
        r.metrics.best_similarity = sims[i];
        r.passed_gate = d[i].passed;
        run.records.push_back(r);
    }
    const auto rep = evaluate(run);
    const std::size_t gated = rep.cost.retrieved;
    const double cost_pct = std::round(rep.cost.fraction * 1000.0) / 10.0;
    const double reduction_pct = std::round(rep.cost.reduction_vs_always_on * 1000.0) / 10.0;
    std::ostringstream o;
    o << "|Q3| " << strat.counts[2] << ", gated " << gated << "/939, cost " << cost_pct << "%, reduction "
      << reduction_pct << "%";
    return {strat.counts[2] == 234 && gated == 117 && cost_pct == 12.5 && reduction_pct == 87.5, o.str()};
}

Outcome iou() {
    std::mt19937_64 rng(505);
    int equal = 0;
    for (int t = 0; t < 200; ++t) {
        const int classes = 2 + static_cast<int>(rng() % 6);
        std::vector<std::int32_t> pred(256), gt(256);
        for (auto& p : pred) p = static_cast<std::int32_t>(rng() % static_cast<unsigned>(classes));
        for (auto& g : gt) g = rng() % 8 == 0 ? kVoidLabel : static_cast<std::int32_t>(rng() % static_cast<unsigned>(classes));
        equal += region_iou(pred, gt, static_cast<std::size_t>(classes), kVoidLabel) == oracle::region_iou(pred, gt, classes, kVoidLabel);
    }
    const double worked = region_iou(std::vector<std::int32_t>{0, 0, 1, 1}, std::vector<std::int32_t>{0, 1, 1, 1}, 2, kVoidLabel);
    return {equal == 200 && std::abs(worked - 0.583333) <= kIouWorkedTol,
            std::to_string(equal) + "/200 crops exact; worked " + fmt("%.6f", worked)};
}

Outcome pearson_check() {
    std::mt19937_64 rng(606);
    double worst_r = 0, worst_p = 0;
    for (std::size_t n : {5u, 12u, 100u, 939u})
        for (int t = 0; t < 20; ++t) {
            std::vector<double> x(n), y(n);
            std::normal_distribution<double> g;
            for (std::size_t i = 0; i < n; ++i) {
                x[i] = g(rng);
                y[i] = 0.1 * t * x[i] + g(rng);
            }
            const auto res = pearson(x, y);
            worst_r = std::max(worst_r, std::abs(res.r - static_cast<double>(oracle::pearson_r(x, y))));
            worst_p = std::max(worst_p, std::abs(res.p - oracle::t_two_sided_p(res.r, n)));
        }
    const double p12 = student_t_two_sided_p(0.6325 * std::sqrt(10.0 / (1 - 0.6325 * 0.6325)), 10);
    worst_p = std::max(worst_p, std::abs(p12 - oracle::t_two_sided_p(0.6325, 12)));
    return {worst_r <= kPearsonRTol && worst_p <= kPearsonPTol,
            "max |dr| " + fmt("%.1e", worst_r) + ", max |dp| " + fmt("%.1e", worst_p) + ", p(n=12,r=.6325) " + fmt("%.4f", p12)};
}

// synth -> bank build -> run -> eval with the default config under `root`.
EvalReport full_pipeline(const fs::path& root) {
    PipelineConfig cfg = load_config("");
    cfg.paths.data_dir = (root / "data").string();
    cfg.paths.bank_dir = (root / "bank").string();
    cfg.paths.out_dir = (root / "out").string();
    Manifest m = generate_dataset(cfg.synth, cfg.paths.data_dir, 1);
    MemoryBank bank = build_bank_from_manifest(m, cfg, 1);
    save_bank(bank, cfg.paths.bank_dir);
    RunResult run = run_pipeline(m, load_bank(cfg.paths.bank_dir), cfg, 1);
    write_run(run, cfg.paths.out_dir);
    EvalReport rep = evaluate(load_run_records(cfg.paths.out_dir));
    emit_report(rep, cfg.paths.out_dir);
    return rep;
}

fs::path g_first_run;

Outcome end_to_end(const fs::path& root) {
    const auto t0 = std::chrono::steady_clock::now();
    const EvalReport rep = full_pipeline(root);
    const double secs = elapsed(t0);
    g_first_run = root;
    const double gated = rep.policy_summary.mean_delta, always = rep.always_on_summary.mean_delta;
    const double top = rep.buckets.back().all.mean_delta;
    double r_sim = std::nan("");
    std::size_t n_sim = 0;
    for (const auto& c : rep.correlations)
        if (c.metric == "best_similarity") {
            r_sim = c.r;
            n_sim = c.n;
        }
    const bool a = rep.policy_summary.count > 0 && gated >= kMinGatedDelta;
    const bool b = always < gated && rep.buckets.back().all.count > 0 && top <= 0.0;
    const bool c = r_sim > kMinSimilarityR;
    std::ostringstream o;
    o << "(a) gated dIoU " << fmt("%+.4f", gated) << " over " << rep.policy_summary.count << (a ? " ok" : " BAD")
      << "; (b) always-on " << fmt("%+.4f", always) << ", top bucket " << fmt("%+.4f", top) << (b ? " ok" : " BAD")
      << "; (c) r(sim,dIoU) " << fmt("%.3f", r_sim) << " n=" << n_sim << (c ? " ok" : " BAD") << "; cost "
      << fmt("%.3f", rep.cost.fraction);
    return {a && b && c && secs < kEndToEndSeconds, o.str()};
}

Outcome calibration() {
    SynthConfig cfg;
    std::vector<double> means;
    for (double sev : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        cfg.corruption_severity = sev;
        double s = 0;
        std::size_t n = 0;
        for (int i = 0; i < 8; ++i) {
            const auto set = compute_uncertainty(generate_scene(cfg, i).ensemble_logits);
            for (float v : set.mutual_information.values) s += v;
            n += set.mutual_information.values.size();
        }
        means.push_back(s / static_cast<double>(n));
    }
    bool mono = true;
    std::ostringstream o;
    o << "mean MI";
    for (std::size_t i = 0; i < means.size(); ++i) {
        o << " " << fmt("%.5f", means[i]);
        if (i > 0 && means[i] < means[i - 1]) mono = false;
    }
    return {mono, o.str()};
}

Outcome determinism(const fs::path& root) {
    if (g_first_run.empty()) return {false, "first run missing"};
    full_pipeline(root);
    std::vector<fs::path> files{"out/report.json", "out/regions.csv"};
    for (const char* sub : {"fused", "plots"})
        for (const auto& e : fs::directory_iterator(g_first_run / "out" / sub))
            files.push_back(fs::path("out") / sub / e.path().filename());
    std::size_t same = 0;
    for (const auto& f : files)
        if (fs::exists(root / f) && read_file_bytes(g_first_run / f) == read_file_bytes(root / f)) ++same;
    return {same == files.size() && files.size() > 2,
            std::to_string(same) + "/" + std::to_string(files.size()) + " files byte-identical"};
}

}  // namespace

int main() {
    testing_support::TempDir tmp("acceptance");
    criterion("formula-oracles", formula_oracles);
    criterion("connected-components", components);
    criterion("hierarchical-retrieval", retrieval);
    criterion("gate-arithmetic", gate_arithmetic);
    criterion("region-iou", iou);
    criterion("pearson", pearson_check);
    criterion("end-to-end-synthetic", [&] { return end_to_end(tmp.path / "run1"); });
    criterion("calibration-direction", calibration);
    criterion("determinism", [&] { return determinism(tmp.path / "run2"); });
    std::printf("%s: %d criterion(s) failed\n", g_failures ? "FAIL" : "PASS", g_failures);
    return g_failures ? 1 : 0;
}
