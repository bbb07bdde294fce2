#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "gcdg/hlc.hpp"
#include "testutil.hpp"

using namespace gcdg;

namespace {

GmmClassifier make_1d(std::vector<std::vector<double>> means_per_class) {
    const std::size_t c = means_per_class.size();
    const std::size_t k = means_per_class.front().size();
    GmmClassifier clf(c, k, 1);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t i = 0; i < k; ++i) {
            clf.component(ci, i).mean = {means_per_class[ci][i]};
        }
    }
    return clf;
}

constexpr double kHalfLogTwoPi = 0.91893853320467274178;

}  // namespace

TEST_CASE("component_log_density closed forms") {
    GmmComponent comp{Vec64{0.0}, Vec64{0.0}};
    CHECK(component_log_density(comp, {0.0}) == Catch::Approx(-kHalfLogTwoPi).epsilon(1e-14));
    CHECK(component_log_density(comp, {2.0}) ==
          Catch::Approx(-kHalfLogTwoPi - 2.0).epsilon(1e-14));

    GmmComponent comp2{Vec64{0.0, 0.0}, Vec64{0.0, 0.0}};
    CHECK(component_log_density(comp2, {0.0, 0.0}) ==
          Catch::Approx(-2.0 * kHalfLogTwoPi).epsilon(1e-14));

    CHECK_THROWS_AS(component_log_density(comp, Vec64{0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("class_log_marginal degenerate mixtures") {
    // K identical components: the mixture equals any single component.
    GmmClassifier dup = make_1d({{0.7, 0.7}});
    const double single = component_log_density(dup.component(0, 0), {0.3});
    CHECK(class_log_marginal(dup, 0, {0.3}) == Catch::Approx(single).epsilon(1e-13));

    // K = 1: mix_log = 0, so the marginal is the component density.
    GmmClassifier one = make_1d({{0.5}});
    CHECK(one.mix_log() == 0.0);
    CHECK(class_log_marginal(one, 0, {1.5}) ==
          Catch::Approx(component_log_density(one.component(0, 0), {1.5})).epsilon(1e-14));
}

TEST_CASE("class_log_marginal symmetric two-component value") {
    // Means at -2 and +2, unit variance, z = 0: both components contribute
    // equally, and the uniform mixture collapses to either component density.
    GmmClassifier clf = make_1d({{-2.0, 2.0}});
    const double expected = -kHalfLogTwoPi - 2.0;
    CHECK(class_log_marginal(clf, 0, {0.0}) == Catch::Approx(expected).epsilon(1e-12));
    CHECK(class_log_marginal(clf, 0, {0.0}) == Catch::Approx(-2.9189385).epsilon(1e-7));
}

TEST_CASE("class_log_marginal rejects bad class ids") {
    GmmClassifier clf = make_1d({{0.0}});
    CHECK_THROWS_AS(class_log_marginal(clf, 1, {0.0}), std::out_of_range);
}

TEST_CASE("class_log_max_component selection and ties") {
    GmmClassifier one = make_1d({{0.5}});
    auto [score1, idx1] = class_log_max_component(one, 0, {2.0});
    CHECK(idx1 == 0);
    CHECK(score1 == Catch::Approx(component_log_density(one.component(0, 0), {2.0})));

    GmmClassifier two = make_1d({{-2.0, 2.0}});
    CHECK(class_log_max_component(two, 0, {1.5}).second == 1);
    // Symmetric tie at z = 0 resolves to the lowest index.
    CHECK(class_log_max_component(two, 0, {0.0}).second == 0);
}

TEST_CASE("responsibilities") {
    GmmClassifier dup = make_1d({{0.7, 0.7, 0.7}});
    Vec64 r = responsibilities(dup, 0, {1.0});
    double sum = 0.0;
    for (double v : r) {
        CHECK(v == Catch::Approx(1.0 / 3.0).epsilon(1e-13));
        sum += v;
    }
    CHECK(sum == Catch::Approx(1.0).epsilon(1e-12));

    GmmClassifier one = make_1d({{0.0}});
    CHECK(responsibilities(one, 0, {3.0}) == Vec64{1.0});

    // Means 0 and 10, unit variance, z = 0: the far component's share is the
    // density ratio e^{-50} / (1 + e^{-50}).
    GmmClassifier far = make_1d({{0.0, 10.0}});
    Vec64 rf = responsibilities(far, 0, {0.0});
    CHECK(rf[0] > 1.0 - 1e-20);
    CHECK(rf[1] == Catch::Approx(std::exp(-50.0)).epsilon(1e-9));
}

TEST_CASE("responsibilities sum to one on random instances") {
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t k = 1 + rng.below(4);
        const std::size_t d = 1 + rng.below(5);
        GmmClassifier clf(1, k, d);
        for (auto& comp : clf.components) {
            for (double& m : comp.mean) m = rng.gaussian(0.0, 2.0);
            for (double& lv : comp.log_var) lv = rng.gaussian(0.0, 1.0);
        }
        Vec64 z(d);
        for (double& v : z) v = rng.gaussian(0.0, 2.0);
        Vec64 r = responsibilities(clf, 0, z);
        double sum = 0.0;
        for (double v : r) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            sum += v;
        }
        CHECK(sum == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("mixture marginal dominates the best single component") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        GmmClassifier clf(1, 3, 2);
        for (auto& comp : clf.components) {
            for (double& m : comp.mean) m = rng.gaussian(0.0, 2.0);
        }
        Vec64 z{rng.gaussian(0.0, 2.0), rng.gaussian(0.0, 2.0)};
        CHECK(class_log_marginal(clf, 0, z) >=
              class_log_max_component(clf, 0, z).first - 1e-12);
    }
    // Equality holds when a single component carries all mass (K = 1).
    GmmClassifier one = make_1d({{0.4}});
    CHECK(class_log_marginal(one, 0, {1.0}) ==
          Catch::Approx(class_log_max_component(one, 0, {1.0}).first).epsilon(1e-14));
}

TEST_CASE("uniform mixing coefficients sum to one per class") {
    for (std::size_t k = 1; k <= 5; ++k) {
        GmmClassifier clf(2, k, 1);
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) sum += std::exp(clf.mix_log());
        CHECK(sum == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("predict: nearer class wins, ties break low, both modes agree") {
    GmmClassifier clf = make_1d({{0.0}, {4.0}});
    CHECK(predict(clf, {1.0}) == 0);
    CHECK(predict(clf, {1.0}, PredictMode::marginal) == 0);
    // Exact midpoint: scores tie and the lowest class id wins.
    CHECK(predict(clf, {2.0}) == 0);
    CHECK(predict(clf, {2.0}, PredictMode::marginal) == 0);

    // Class 0 bimodal at -2/+2, class 1 concentrated at 0 (duplicated
    // component). At z = 1.9 class 0 wins under both rules.
    GmmClassifier bimodal = make_1d({{-2.0, 2.0}, {0.0, 0.0}});
    CHECK(predict(bimodal, {1.9}, PredictMode::max_component) == 0);
    CHECK(predict(bimodal, {1.9}, PredictMode::marginal) == 0);
}

TEST_CASE("hlc_backward closed forms and zero upstream") {
    GmmClassifier clf = make_1d({{0.0}});
    HlcGrads grads(clf);

    Mat64 zero_up(1, 1);
    hlc_backward(clf, {2.0}, zero_up, grads);
    CHECK(grads.d_mean[0][0] == 0.0);
    CHECK(grads.d_log_var[0][0] == 0.0);
    CHECK(grads.d_feature[0] == 0.0);

    Mat64 up(1, 1);
    up(0, 0) = 1.0;
    hlc_backward(clf, {2.0}, up, grads);
    CHECK(grads.d_mean[0][0] == Catch::Approx(2.0).epsilon(1e-14));
    CHECK(grads.d_log_var[0][0] == Catch::Approx(1.5).epsilon(1e-14));
    CHECK(grads.d_feature[0] == Catch::Approx(-2.0).epsilon(1e-14));

    Mat64 bad(2, 1);
    CHECK_THROWS_AS(hlc_backward(clf, {2.0}, bad, grads), std::invalid_argument);
}

TEST_CASE("hlc_backward matches finite differences") {
    Rng rng(5150);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t c = 1 + rng.below(4);
        const std::size_t k = 1 + rng.below(3);
        const std::size_t d = 1 + rng.below(8);
        GmmClassifier clf(c, k, d);
        for (auto& comp : clf.components) {
            for (double& m : comp.mean) m = rng.gaussian(0.0, 1.0);
            for (double& lv : comp.log_var) lv = rng.gaussian(0.0, 0.5);
        }
        Vec64 z(d);
        for (double& v : z) v = rng.gaussian(0.0, 1.0);
        Mat64 upstream(c, k);
        for (double& w : upstream.values) w = rng.gaussian(0.0, 1.0);

        HlcGrads grads(clf);
        hlc_backward(clf, z, upstream, grads);

        // Oracle objective: sum_{c,i} upstream(c,i) * log N_ci(z).
        auto objective = [&](const GmmClassifier& m, const Vec64& feat) {
            double acc = 0.0;
            for (std::size_t ci = 0; ci < c; ++ci) {
                for (std::size_t i = 0; i < k; ++i) {
                    acc += upstream(ci, i) * component_log_density(m.component(ci, i), feat);
                }
            }
            return acc;
        };

        for (std::size_t j = 0; j < c * k; ++j) {
            for (std::size_t dd = 0; dd < d; ++dd) {
                auto f_mean = [&](const Vec64& x) {
                    GmmClassifier copy = clf;
                    copy.components[j].mean[dd] = x[0];
                    return objective(copy, z);
                };
                worst = std::max(worst,
                                 testutil::rel_err(grads.d_mean[j][dd],
                                                   testutil::central_diff(
                                                       f_mean, {clf.components[j].mean[dd]}, 0)));
                auto f_lv = [&](const Vec64& x) {
                    GmmClassifier copy = clf;
                    copy.components[j].log_var[dd] = x[0];
                    return objective(copy, z);
                };
                worst = std::max(
                    worst, testutil::rel_err(grads.d_log_var[j][dd],
                                             testutil::central_diff(
                                                 f_lv, {clf.components[j].log_var[dd]}, 0)));
            }
        }
        auto f_z = [&](const Vec64& feat) { return objective(clf, feat); };
        worst = std::max(worst, testutil::max_grad_rel_err(f_z, z, grads.d_feature));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("log_var clamp keeps components in range") {
    GmmComponent comp{Vec64{0.0}, Vec64{40.0}};
    comp.clamp_log_var();
    CHECK(comp.log_var[0] == kLogVarMax);
    comp.log_var[0] = -100.0;
    comp.clamp_log_var();
    CHECK(comp.log_var[0] == kLogVarMin);
}
