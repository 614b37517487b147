#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "checks.hpp"
#include "oracles.hpp"
#include "paramcpd/cpd.hpp"

using namespace paramcpd;

TEST_CASE("segment cost") {
    SUBCASE("constant segments and single points cost nothing") {
        const Series s = Series::univariate({2, 2, 2, 2, 5});
        const KernelCostModel m(s, 0.7);
        CHECK(rbf_cost(m, 0, 4) == doctest::Approx(0.0));
        for (std::size_t a = 0; a < 5; ++a) CHECK(rbf_cost(m, a, a + 1) == 0.0);
        CHECK(rbf_cost(m, 0, 5) > 0.0);
    }
    SUBCASE("matches the naive double sum") {
        std::mt19937_64 rng(3);
        for (int rep = 0; rep < 20; ++rep) {
            const Series s = checks::random_series(rng, 6, 1 + rep % 2);
            const double g = median_heuristic_gamma(s);
            const KernelCostModel m(s, g);
            for (std::size_t a = 0; a < 6; ++a) {
                for (std::size_t b = a + 1; b <= 6; ++b) CHECK(std::abs(rbf_cost(m, a, b) - oracle::naive_rbf_cost(s, g, a, b)) < 1e-10);
            }
            for (std::size_t i = 0; i < 6; ++i) {
                CHECK(m.kernel(i, i) == 1.0);
                for (std::size_t j = 0; j < 6; ++j) CHECK(m.kernel(i, j) == m.kernel(j, i));
            }
        }
    }
    SUBCASE("invalid ranges") {
        const KernelCostModel m(Series::univariate({1, 2, 3}), 1.0);
        CHECK_THROWS_AS(rbf_cost(m, 2, 2), std::out_of_range);
        CHECK_THROWS_AS(rbf_cost(m, 0, 4), std::out_of_range);
    }
    SUBCASE("shuffling a segment does not change its cost") {
        std::mt19937_64 rng(11);
        std::vector<double> v(30);
        for (double& x : v) x = std::normal_distribution<double>()(rng);
        const double g = 0.4;
        const double before = rbf_cost(KernelCostModel(Series::univariate(v), g), 5, 25);
        std::shuffle(v.begin() + 5, v.begin() + 25, rng);
        CHECK(rbf_cost(KernelCostModel(Series::univariate(v), g), 5, 25) == doctest::Approx(before).epsilon(1e-12));
    }
}

TEST_CASE("median heuristic") {
    // Distances of {0, 1, 3}: 1, 2, 3 -> median 2.
    CHECK(median_heuristic_gamma(Series::univariate({0, 1, 3})) == doctest::Approx(1.0 / 8.0));
    // Mostly constant: falls back to a positive bandwidth.
    std::vector<double> v(100, 1.0);
    v[50] = 2.0;
    CHECK(median_heuristic_gamma(Series::univariate(v)) > 0.0);
    CHECK(median_heuristic_gamma(Series::univariate(std::vector<double>(10, 3.0))) == 1.0);
}

TEST_CASE("auto penalty") {
    const Series s = Series::univariate(std::vector<double>(9600, 0.0));
    CHECK(auto_penalty(s, 3.0) == doctest::Approx(27.5).epsilon(0.001));
    CHECK(auto_penalty(s, 3.0) == doctest::Approx(3.0 * std::log(9600.0)));
    CHECK(auto_penalty(s) == doctest::Approx(kDefaultPenaltyScale * std::log(9600.0)));
}

TEST_CASE("simple segmentations") {
    SUBCASE("constant series has no breakpoints") {
        const Series s = Series::univariate(std::vector<double>(50, 4.0));
        for (double pen : {0.01, 1.0, 10.0}) {
            CHECK(pelt(s, pen, 2).breakpoints.empty());
            CHECK(exact_dp(s, pen, 2).breakpoints.empty());
        }
    }
    SUBCASE("step series breaks at the step") {
        std::vector<double> v(20, 0.0);
        std::fill(v.begin() + 10, v.end(), 1.0);
        const Series s = Series::univariate(v);
        const auto seg = pelt(s, 0.5, 2);
        CHECK(seg.breakpoints == std::vector<std::size_t>{10});
        CHECK(exact_dp(s, 0.5, 2).breakpoints == seg.breakpoints);
        CHECK(oracle::brute_force_segmentation(s, 0.5, 2, seg.gamma).breakpoints == seg.breakpoints);
    }
    SUBCASE("too short for two segments") {
        const Series s = Series::univariate({0, 0, 0, 5, 5, 5});
        CHECK(pelt(s, 0.0, 4).breakpoints.empty());
        CHECK(exact_dp(s, 0.0, 4).breakpoints.empty());
    }
    SUBCASE("penalty above twice the largest segment cost forbids breakpoints") {
        std::mt19937_64 rng(6);
        const Series s = checks::random_series(rng, 60);
        const double g = median_heuristic_gamma(s);
        const double whole = rbf_cost(KernelCostModel(s, g), 0, 60);
        CHECK(pelt(s, 2.0 * whole + 1e-9, 1, g).breakpoints.empty());
    }
    SUBCASE("invalid settings") {
        const Series s = Series::univariate({1, 2, 3, 4});
        CHECK_THROWS(pelt(s, -1.0, 1));
        CHECK_THROWS(pelt(s, 1.0, 0));
        CHECK_THROWS(pelt(Series::univariate({1, NAN, 3}), 1.0, 1));
    }
}

TEST_CASE("total cost is recomputable from the breakpoints") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 30; ++rep) {
        const Series s = checks::random_series(rng, 80);
        const auto seg = pelt(s, 2.0, 5);
        const KernelCostModel m(s, seg.gamma);
        double total = 0.0;
        std::size_t a = 0;
        for (std::size_t b : seg.breakpoints) {
            total += rbf_cost(m, a, b) + seg.penalty;
            a = b;
        }
        total += rbf_cost(m, a, 80);
        CHECK(seg.total_cost == doctest::Approx(total).epsilon(1e-9));
        for (std::size_t i = 0; i + 1 < seg.breakpoints.size(); ++i) CHECK(seg.breakpoints[i] < seg.breakpoints[i + 1]);
    }
}

TEST_CASE("pelt and exact_dp agree with exhaustive enumeration on short series") {
    const auto r = checks::pelt_vs_brute_force(300, 41);
    INFO(r.first_failure);
    CHECK(r.mismatches == 0);
}

TEST_CASE("pelt agrees with exact_dp on longer series") {
    const auto r = checks::pelt_vs_exact(200, 200, 42);
    INFO(r.first_failure);
    CHECK(r.mismatches == 0);
}

TEST_CASE("more penalty never means more breakpoints") {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 20; ++rep) {
        const Series s = checks::random_series(rng, 150);
        std::size_t prev = s.length;
        for (double c : {0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4}) {
            const std::size_t n = pelt(s, auto_penalty(s, c), 5).breakpoints.size();
            CHECK(n <= prev);
            prev = n;
        }
    }
}

TEST_CASE("positive affine maps leave breakpoints unchanged") {
    std::mt19937_64 rng(14);
    for (int rep = 0; rep < 20; ++rep) {
        const Series s = checks::random_series(rng, 120);
        Series t = s;
        for (double& v : t.values) v = 3.5 * v - 20.0;
        CHECK(pelt(s, 3.0, 5).breakpoints == pelt(t, 3.0, 5).breakpoints);
    }
}
