#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gcdg/dcb.hpp"

using namespace gcdg;

namespace {

GmmClassifier two_comp_1d(double m0, double m1) {
    GmmClassifier clf(1, 2, 1);
    clf.component(0, 0).mean = {m0};
    clf.component(0, 1).mean = {m1};
    return clf;
}

TransportPlan run_sinkhorn(const Mat64& cost_values, double lambda, std::size_t iterations) {
    return sinkhorn(CostMatrix{cost_values}, DcbConfig{lambda, iterations, true});
}

}  // namespace

TEST_CASE("build_cost row-min shift") {
    // One sample exactly at component 0's mean, far from component 1: the
    // shifted row is zero at column 0.
    GmmClassifier clf = two_comp_1d(0.0, 10.0);
    CostMatrix cost = build_cost(clf, 0, {{0.0}});
    CHECK(cost.values(0, 0) == 0.0);
    CHECK(cost.values(0, 1) == Catch::Approx(50.0).epsilon(1e-12));

    // Identical components: every row is all-equal, hence all zeros.
    GmmClassifier dup = two_comp_1d(1.0, 1.0);
    CostMatrix flat = build_cost(dup, 0, {{0.3}, {-0.8}});
    for (double v : flat.values.values) CHECK(v == 0.0);

    CHECK_THROWS_AS(build_cost(clf, 0, {}), std::invalid_argument);
    GmmClassifier single(1, 1, 1);
    CHECK_THROWS_AS(build_cost(single, 0, {{0.0}}), std::invalid_argument);
}

TEST_CASE("build_cost argmin agrees with the responsibility argmax") {
    Rng rng(92);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t k = 2 + rng.below(3);
        const std::size_t d = 1 + rng.below(4);
        GmmClassifier clf(1, k, d);
        for (auto& comp : clf.components) {
            for (double& m : comp.mean) m = rng.gaussian(0.0, 1.5);
            for (double& lv : comp.log_var) lv = rng.gaussian(0.0, 0.4);
        }
        std::vector<Vec64> zs;
        for (int n = 0; n < 6; ++n) {
            Vec64 z(d);
            for (double& v : z) v = rng.gaussian(0.0, 1.5);
            zs.push_back(z);
        }
        CostMatrix cost = build_cost(clf, 0, zs);
        for (std::size_t n = 0; n < zs.size(); ++n) {
            std::size_t argmin = 0;
            for (std::size_t i = 1; i < k; ++i) {
                if (cost.values(n, i) < cost.values(n, argmin)) argmin = i;
            }
            Vec64 r = responsibilities(clf, 0, zs[n]);
            std::size_t argmax = 0;
            for (std::size_t i = 1; i < k; ++i) {
                if (r[i] > r[argmax]) argmax = i;
            }
            CHECK(argmin == argmax);
        }
    }
}

TEST_CASE("sinkhorn on an all-zero cost is uniform") {
    Mat64 cost(2, 2, 0.0);
    TransportPlan plan = run_sinkhorn(cost, 1.0, 3);
    for (double v : plan.gamma.values) CHECK(v == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(plan.marginal_violation < 1e-12);
}

TEST_CASE("sinkhorn 2x2 closed form") {
    // O = [[0,1],[1,0]], lambda = 1, long run: gamma = [[p, 1-p], [1-p, p]]
    // with p = 1 / (1 + e^{-1}).
    Mat64 cost(2, 2, 0.0);
    cost(0, 1) = 1.0;
    cost(1, 0) = 1.0;
    TransportPlan plan = run_sinkhorn(cost, 1.0, 500);
    const double p = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(plan.gamma(0, 0) == Catch::Approx(p).margin(1e-6));
    CHECK(plan.gamma(0, 1) == Catch::Approx(1.0 - p).margin(1e-6));
    CHECK(plan.gamma(1, 0) == Catch::Approx(1.0 - p).margin(1e-6));
    CHECK(plan.gamma(1, 1) == Catch::Approx(p).margin(1e-6));

    const auto hard = assign(plan);
    CHECK(hard == std::vector<std::size_t>{0, 1});
}

TEST_CASE("sinkhorn forces column balance against a dominant column") {
    Rng rng(55);
    Mat64 cost(4, 2);
    for (std::size_t n = 0; n < 4; ++n) {
        cost(n, 0) = 0.0;                           // column 0 always preferred
        cost(n, 1) = 3.0 + rng.uniform01() * 2.0;   // expensive column
    }
    TransportPlan plan = run_sinkhorn(cost, 1.0, 400);
    double col0 = 0.0, col1 = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        col0 += plan.gamma(n, 0);
        col1 += plan.gamma(n, 1);
    }
    CHECK(col0 == Catch::Approx(2.0).margin(1e-8));
    CHECK(col1 == Catch::Approx(2.0).margin(1e-8));
}

TEST_CASE("sinkhorn rows are exact probability vectors at any iteration count") {
    Rng rng(66);
    for (std::size_t iterations : {1u, 3u, 7u}) {
        Mat64 cost(6, 3);
        for (double& v : cost.values) v = rng.uniform01() * 4.0;
        TransportPlan plan = run_sinkhorn(cost, 1.0, iterations);
        CHECK(plan.iterations_run == iterations);
        for (std::size_t n = 0; n < 6; ++n) {
            double row = 0.0;
            for (std::size_t i = 0; i < 3; ++i) {
                CHECK(plan.gamma(n, i) >= 0.0);
                row += plan.gamma(n, i);
            }
            CHECK(std::abs(row - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("sinkhorn marginal violation shrinks with more alternations") {
    Rng rng(67);
    for (int trial = 0; trial < 20; ++trial) {
        Mat64 cost(8, 3);
        for (double& v : cost.values) v = rng.uniform01() * 5.0;
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t iterations : {1u, 3u, 10u, 50u, 200u}) {
            const double violation = run_sinkhorn(cost, 1.0, iterations).marginal_violation;
            CHECK(violation <= prev + 1e-12);
            prev = violation;
        }
        CHECK(prev < 1e-8);
    }
}

TEST_CASE("sinkhorn underflow raises a numeric error naming the column") {
    Mat64 cost(2, 2, 0.0);
    cost(0, 1) = 1e4;
    cost(1, 1) = 1e4;
    CHECK_THROWS_MATCHES(run_sinkhorn(cost, 1.0, 3), NumericError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("column 1")));
}

TEST_CASE("row-constant cost shifts leave the plan unchanged") {
    // A per-row additive constant scales the kernel row, which the row
    // scaling vector absorbs: the plan (and its argmax) is unchanged.
    Rng rng(68);
    GmmClassifier clf(1, 3, 2);
    for (auto& comp : clf.components) {
        for (double& m : comp.mean) m = rng.gaussian(0.0, 1.0);
    }
    std::vector<Vec64> zs;
    for (int n = 0; n < 5; ++n) zs.push_back({rng.gaussian(0.0, 1.0), rng.gaussian(0.0, 1.0)});

    CostMatrix cost = build_cost(clf, 0, zs);
    CostMatrix shifted = cost;
    for (std::size_t n = 0; n < shifted.values.rows; ++n) {
        const double c = 0.5 * static_cast<double>(n + 1);
        for (std::size_t i = 0; i < shifted.values.cols; ++i) shifted.values(n, i) += c;
    }
    DcbConfig cfg{1.0, 3, true};
    TransportPlan a = sinkhorn(cost, cfg);
    TransportPlan b = sinkhorn(shifted, cfg);
    CHECK(assign(a) == assign(b));
    for (std::size_t j = 0; j < a.gamma.values.size(); ++j) {
        CHECK(a.gamma.values[j] == Catch::Approx(b.gamma.values[j]).epsilon(1e-12));
    }
}

TEST_CASE("assign tie-breaking") {
    Mat64 uniform(3, 2, 0.5);
    CHECK(assign(TransportPlan{uniform, 0, 0.0}) == std::vector<std::size_t>{0, 0, 0});

    Mat64 hard(2, 2, 0.0);
    hard(0, 0) = 1.0;
    hard(1, 1) = 1.0;
    CHECK(assign(TransportPlan{hard, 0, 0.0}) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("identical components distribute by tie-break") {
    GmmClassifier dup = two_comp_1d(0.5, 0.5);
    CostMatrix cost = build_cost(dup, 0, {{0.1}, {0.9}, {-0.4}});
    TransportPlan plan = sinkhorn(cost, DcbConfig{1.0, 3, true});
    // All-zero cost rows give a uniform plan; every sample resolves to the
    // lowest component index.
    for (std::size_t idx : assign(plan)) CHECK(idx == 0);
}

TEST_CASE("responsibilities_plan matches per-sample responsibilities") {
    GmmClassifier clf = two_comp_1d(-1.0, 1.0);
    std::vector<Vec64> zs{{-0.9}, {1.2}, {0.0}};
    TransportPlan plan = responsibilities_plan(clf, 0, zs);
    CHECK(plan.iterations_run == 0);
    for (std::size_t n = 0; n < zs.size(); ++n) {
        Vec64 r = responsibilities(clf, 0, zs[n]);
        CHECK(plan.gamma(n, 0) == Catch::Approx(r[0]).epsilon(1e-14));
        CHECK(plan.gamma(n, 1) == Catch::Approx(r[1]).epsilon(1e-14));
    }
}
