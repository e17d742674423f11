#include <doctest.h>

#include <fstream>
#include <random>

#include "gatedseg/error.hpp"
#include "gatedseg/eval.hpp"
#include "gatedseg/tensor.hpp"
#include "oracles.hpp"

using namespace gatedseg;
using testing_support::TempDir;
using doctest::Approx;

namespace {

RunRecords random_run(std::size_t n, std::size_t passed, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    RunRecords run;
    run.policy = "two_stage";
    for (std::size_t i = 0; i < n; ++i) {
        RegionRecord r;
        char id[32];
        std::snprintf(id, sizeof id, "scene_%02zu/r%03zu", i / 20, i % 20);
        r.region_id = id;
        r.scene_id = r.region_id.substr(0, 8);
        r.bbox = {1, 2, 10, 12};
        r.area = 50 + i;
        r.metrics.region_id = r.region_id;
        r.metrics.mean_mi = u(rng);
        r.metrics.mean_entropy = r.metrics.mean_mi + u(rng);
        r.metrics.mean_epkl = u(rng);
        r.metrics.max_prob = 0.5 + 0.5 * u(rng);
        r.metrics.margin = u(rng);
        r.metrics.best_similarity = u(rng);
        r.base_iou = u(rng);
        r.fused_iou = std::clamp(r.base_iou + 0.6 * (u(rng) - 0.5), 0.0, 1.0);
        r.delta_iou = r.fused_iou - r.base_iou;
        r.success = r.delta_iou > 0;
        r.metrics.base_iou = r.base_iou;
        r.metrics.combined_oracle = r.metrics.mean_mi * (1 - r.base_iou);
        r.score = r.metrics.mean_mi;
        r.passed_gate = i < passed;
        run.records.push_back(r);
    }
    return run;
}

std::size_t line_count(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

}  // namespace

TEST_CASE("region_iou examples") {
    std::vector<std::int32_t> a{0, 0, 1, 1}, b{0, 1, 1, 1};
    CHECK(region_iou(a, a, 2, kVoidLabel) == 1.0);
    CHECK(region_iou(a, b, 2, kVoidLabel) == Approx(0.583333).epsilon(1e-6));
    CHECK(region_iou(std::vector<std::int32_t>(4, 0), std::vector<std::int32_t>(4, 1), 2, kVoidLabel) == 0.0);
    CHECK(region_iou(a, std::vector<std::int32_t>(4, kVoidLabel), 2, kVoidLabel) == 1.0);
    CHECK_THROWS_AS(region_iou(a, std::vector<std::int32_t>{0}, 2, kVoidLabel), ArgumentError);
}

TEST_CASE("property: region_iou equals set counting on random crops") {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 200; ++t) {
        const int classes = 2 + static_cast<int>(rng() % 5);
        std::vector<std::int32_t> pred(256), gt(256);
        for (auto& p : pred) p = static_cast<std::int32_t>(rng() % static_cast<unsigned>(classes));
        for (auto& g : gt) g = rng() % 10 == 0 ? kVoidLabel : static_cast<std::int32_t>(rng() % static_cast<unsigned>(classes));
        CHECK(region_iou(pred, gt, static_cast<std::size_t>(classes), kVoidLabel) ==
              oracle::region_iou(pred, gt, classes, kVoidLabel));
    }
}

TEST_CASE("crop_labels") {
    std::vector<std::int32_t> full(20);
    for (int i = 0; i < 20; ++i) full[static_cast<std::size_t>(i)] = i;
    CHECK(crop_labels(full, 5, BBox{1, 1, 2, 2}) == std::vector<std::int32_t>{6, 7, 11, 12});
}

TEST_CASE("records round-trip through JSON") {
    auto run = random_run(30, 7, 1);
    run.records[3].metrics.best_similarity.reset();
    CHECK(run_records_from_json(run_records_to_json(run)) == run);
    CHECK_THROWS_AS(run_records_from_json("{\"records\": 3}"), Error);
}

TEST_CASE("never-gated records") {
    auto run = random_run(20, 0, 2);
    run.policy = "never";
    for (auto& r : run.records) {
        r.fused_iou = r.base_iou;
        r.delta_iou = 0;
        r.success = false;
    }
    auto rep = evaluate(run);
    CHECK(rep.cost.retrieved == 0);
    CHECK(rep.cost.fraction == 0.0);
    CHECK(rep.policy_summary.count == 0);
    CHECK(rep.policy_summary.mean_delta == 0.0);
}

TEST_CASE("every fused region improves") {
    auto run = random_run(60, 20, 3);
    for (auto& r : run.records) {
        r.base_iou = std::min(r.base_iou, 0.95);
        r.fused_iou = std::min(1.0, r.base_iou + 0.04);
        r.delta_iou = r.fused_iou - r.base_iou;
        r.success = true;
    }
    auto rep = evaluate(run);
    for (const auto& b : rep.buckets) {
        if (b.all.count > 0) CHECK(b.all.success_rate == 1.0);
        if (b.gated.count > 0) CHECK(b.gated.success_rate == 1.0);
    }
    CHECK(rep.failures.count == 0);
}

TEST_CASE("cost arithmetic for 117 of 939") {
    auto rep = evaluate(random_run(939, 117, 4));
    CHECK(rep.cost.retrieved == 117);
    CHECK(rep.cost.total == 939);
    CHECK(rep.cost.fraction == Approx(117.0 / 939.0));
    CHECK(rep.cost.fraction == Approx(0.125).epsilon(0.002));
    CHECK(rep.cost.reduction_vs_always_on == Approx(1.0 - 117.0 / 939.0));
}

TEST_CASE("report totals are conserved") {
    auto run = random_run(200, 50, 5);
    auto rep = evaluate(run);
    std::size_t total = 0;
    for (const auto& b : rep.buckets) total += b.all.count;
    CHECK(total == 200);
    const auto failures = std::count_if(run.records.begin(), run.records.end(),
                                        [](const auto& r) { return r.delta_iou < kFailureThreshold; });
    CHECK(rep.failures.count == static_cast<std::size_t>(failures));
    CHECK(rep.failures.region_ids.size() == rep.failures.count);
    CHECK(rep.always_on_summary.count == 200);
    CHECK(rep.policy_summary.count == 50);
    REQUIRE(rep.stratification.has_value());
    CHECK(rep.stratification->quartile.size() == 200);

    // Correlation entries agree with a direct computation.
    std::vector<double> sim, delta;
    for (const auto& r : run.records) {
        sim.push_back(*r.metrics.best_similarity);
        delta.push_back(r.delta_iou);
    }
    auto it = std::find_if(rep.correlations.begin(), rep.correlations.end(),
                           [](const auto& c) { return c.metric == "best_similarity"; });
    REQUIRE(it != rep.correlations.end());
    CHECK(it->r == Approx(static_cast<double>(oracle::pearson_r(sim, delta))).epsilon(1e-9));
    CHECK(it->n == 200);
}

TEST_CASE("bucket edges") {
    auto run = random_run(4, 0, 6);
    const double base[4] = {0.2, 0.8, 0.80000001, 0.0};
    for (std::size_t i = 0; i < 4; ++i) run.records[i].base_iou = base[i];
    auto rep = evaluate(run);
    REQUIRE(rep.buckets.size() == 3);
    CHECK(rep.buckets[0].all.count == 1);
    CHECK(rep.buckets[1].all.count == 2);
    CHECK(rep.buckets[2].all.count == 1);
}

TEST_CASE("emitted report round-trips and is deterministic") {
    TempDir tmp("report");
    auto rep = evaluate(random_run(80, 10, 7));
    emit_report(rep, tmp.path / "a");
    emit_report(rep, tmp.path / "b");
    CHECK(report_from_json(read_text_file(tmp.path / "a" / "report.json")) == rep);
    CHECK(line_count(tmp.path / "a" / "regions.csv") == 81);
    for (const char* f : {"report.json", "regions.csv", "plots/metric_vs_delta.csv", "plots/quartile_correlation.csv",
                          "plots/cost_curve.csv", "plots/correlations.csv"}) {
        CAPTURE(f);
        REQUIRE(std::filesystem::exists(tmp.path / "a" / f));
        CHECK(read_file_bytes(tmp.path / "a" / f) == read_file_bytes(tmp.path / "b" / f));
    }
    std::ifstream csv(tmp.path / "a" / "regions.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header.rfind("region_id,scene_id,x0,y0,x1,y1,area,score,quartile,passed_gate,base_iou,fused_iou,delta_iou", 0) == 0);
}
