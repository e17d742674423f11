#include <doctest.h>

#include <random>

#include "gatedseg/error.hpp"
#include "gatedseg/uncertainty.hpp"
#include "oracles.hpp"

using namespace gatedseg;
using doctest::Approx;

namespace {

// One pixel, C classes, given directly as probabilities.
ProbMap pixel(std::vector<float> p) {
    ProbMap m(p.size(), 1, 1);
    m.values = std::move(p);
    return m;
}

ArrayF32 random_logits(std::mt19937_64& rng, std::size_t k, std::size_t c, std::size_t h, std::size_t w,
                       double scale) {
    ArrayF32 a({k, c, h, w});
    std::normal_distribution<float> n(0.0f, static_cast<float>(scale));
    for (auto& v : a.data) v = n(rng);
    return a;
}

std::vector<std::vector<oracle::ld>> pixel_members(const ArrayF32& logits, std::size_t pix) {
    const std::size_t k = logits.dim(0), c = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
    std::vector<std::vector<oracle::ld>> out;
    for (std::size_t m = 0; m < k; ++m) {
        std::vector<oracle::ld> z(c);
        for (std::size_t j = 0; j < c; ++j) z[j] = logits.data[(m * c + j) * plane + pix];
        out.push_back(oracle::softmax(z));
    }
    return out;
}

}  // namespace

TEST_CASE("softmax examples") {
    ArrayF32 equal({1, 4, 1, 1}, 3.0f);
    auto p = softmax_logits(equal);
    for (float v : p[0].values) CHECK(v == Approx(0.25).epsilon(1e-7));

    ArrayF32 two({1, 2, 1, 1}, std::vector<float>{static_cast<float>(std::log(9.0)), 0.0f});
    p = softmax_logits(two);
    CHECK(p[0].values[0] == Approx(0.9).epsilon(1e-6));
    CHECK(p[0].values[1] == Approx(0.1).epsilon(1e-6));

    // Integer logits so the shift is exact in float.
    ArrayF32 base({1, 2, 1, 1}, std::vector<float>{2.0f, -1.0f});
    ArrayF32 shifted({1, 2, 1, 1}, std::vector<float>{1002.0f, 999.0f});
    p = softmax_logits(base);
    auto q = softmax_logits(shifted);
    CHECK(std::abs(q[0].values[0] - p[0].values[0]) < 1e-6);
    CHECK(std::abs(q[0].values[1] - p[0].values[1]) < 1e-6);
}

TEST_CASE("ensemble mean") {
    std::vector<ProbMap> members{pixel({0.9f, 0.1f}), pixel({0.5f, 0.5f})};
    auto m = ensemble_mean(members);
    CHECK(m.values[0] == Approx(0.7));
    CHECK(m.values[1] == Approx(0.3));
    std::vector<ProbMap> same{pixel({0.2f, 0.8f}), pixel({0.2f, 0.8f})};
    CHECK(ensemble_mean(same).values == same[0].values);
    std::vector<ProbMap> one{pixel({1.0f, 0.0f})};
    CHECK_THROWS_AS(ensemble_mean(one), ArgumentError);
    std::vector<ProbMap> mismatched{pixel({1.0f, 0.0f}), pixel({0.3f, 0.3f, 0.4f})};
    CHECK_THROWS_AS(ensemble_mean(mismatched), ArgumentError);
}

TEST_CASE("worked values") {
    std::vector<ProbMap> members{pixel({0.9f, 0.1f}), pixel({0.5f, 0.5f})};
    auto mean = ensemble_mean(members);
    CHECK(predictive_entropy(mean).values[0] == Approx(0.610864).epsilon(1e-6));
    CHECK(mutual_information(members).values[0] == Approx(0.101749).epsilon(1e-5));
    CHECK(epkl(members).values[0] == Approx(0.439445).epsilon(1e-6));

    ProbMap uniform(19, 1, 1, 1.0f / 19.0f);
    CHECK(predictive_entropy(uniform).values[0] == Approx(2.944439).epsilon(1e-6));
    CHECK(predictive_entropy(pixel({1.0f, 0.0f, 0.0f})).values[0] == 0.0f);
}

TEST_CASE("identical members carry no epistemic uncertainty") {
    std::vector<ProbMap> same{pixel({0.3f, 0.7f}), pixel({0.3f, 0.7f}), pixel({0.3f, 0.7f})};
    CHECK(mutual_information(same).values[0] == Approx(0.0).epsilon(1e-7));
    CHECK(epkl(same).values[0] == Approx(0.0).epsilon(1e-7));
}

TEST_CASE("oracle equivalence on a 4x4xC ensemble") {
    std::mt19937_64 rng(3);
    for (std::size_t c : {2u, 7u, 19u}) {
        auto logits = random_logits(rng, 4, c, 4, 4, 2.5);
        auto set = compute_uncertainty(logits);
        for (std::size_t pix = 0; pix < 16; ++pix) {
            auto members = pixel_members(logits, pix);
            CHECK(std::abs(set.entropy.values[pix] - static_cast<double>(oracle::predictive_entropy(members))) < 1e-6);
            CHECK(std::abs(set.mutual_information.values[pix] - static_cast<double>(oracle::mutual_information(members))) < 1e-6);
            CHECK(std::abs(set.epkl.values[pix] - static_cast<double>(oracle::epkl(members))) < 1e-6);
        }
    }
}

TEST_CASE("property: bounds and member-order invariance on random ensembles") {
    std::mt19937_64 rng(5);
    for (std::size_t k : {2u, 5u}) {
        for (std::size_t c : {2u, 19u}) {
            auto logits = random_logits(rng, k, c, 25, 40, 3.0);  // 1000 pixels
            auto set = compute_uncertainty(logits);
            const double ln_c = std::log(static_cast<double>(c));
            for (std::size_t i = 0; i < 1000; ++i) {
                const double mi = set.mutual_information.values[i], h = set.entropy.values[i];
                CHECK(mi >= 0.0);
                CHECK(mi <= h + 1e-6);
                CHECK(h <= ln_c + 1e-6);
                CHECK(set.epkl.values[i] >= 0.0);
            }
            // Reverse the member order.
            ArrayF32 rev = logits;
            const std::size_t block = c * 1000;
            for (std::size_t m = 0; m < k; ++m)
                std::copy_n(logits.data.begin() + static_cast<long>((k - 1 - m) * block), block,
                            rev.data.begin() + static_cast<long>(m * block));
            auto set2 = compute_uncertainty(rev);
            for (std::size_t i = 0; i < 1000; ++i) {
                CHECK(std::abs(set2.mutual_information.values[i] - set.mutual_information.values[i]) < 1e-6);
                CHECK(std::abs(set2.epkl.values[i] - set.epkl.values[i]) < 1e-6);
                CHECK(std::abs(set2.entropy.values[i] - set.entropy.values[i]) < 1e-6);
            }
        }
    }
}

TEST_CASE("argmax ties go to the lowest class") {
    ProbMap m(3, 1, 2);
    m.values = {0.4f, 0.2f, 0.4f, 0.5f, 0.2f, 0.3f};
    auto a = argmax_labels(m);
    CHECK(a == std::vector<std::int32_t>{0, 1});
}

TEST_CASE("uncertainty kind names") {
    CHECK(parse_uncertainty_kind("mi") == UncertaintyKind::mutual_information);
    CHECK(parse_uncertainty_kind("entropy") == UncertaintyKind::entropy);
    CHECK(parse_uncertainty_kind(uncertainty_kind_name(UncertaintyKind::epkl)) == UncertaintyKind::epkl);
    CHECK_THROWS_AS(parse_uncertainty_kind("variance"), Error);
}
