// Heterogeneity Learning Classifier: one diagonal-covariance Gaussian mixture
// per class with the mixing coefficients pinned to the uniform 1/K, so that
// component usage is shaped by assignment balancing rather than by trained
// priors. Scoring, prediction and the analytic parameter gradients live here.
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gcdg/numerics.hpp"

namespace gcdg {

// log-variance clamp; keeps densities finite on collapsed or exploded
// components without constrained optimization.
inline constexpr double kLogVarMin = -12.0;
inline constexpr double kLogVarMax = 12.0;

inline constexpr double kLogTwoPi = 1.8378770664093454836;

struct GmmComponent {
    Vec64 mean;
    Vec64 log_var;

    std::size_t dim() const { return mean.size(); }

    void clamp_log_var() {
        for (double& lv : log_var) lv = std::clamp(lv, kLogVarMin, kLogVarMax);
    }
};

struct GmmClassifier {
    std::size_t classes = 0;
    std::size_t components_per_class = 0;
    std::size_t dim = 0;
    std::vector<GmmComponent> components;  // class-major: index c*K + i

    GmmClassifier() = default;
    GmmClassifier(std::size_t c, std::size_t k, std::size_t d)
        : classes(c), components_per_class(k), dim(d),
          components(c * k, GmmComponent{Vec64(d, 0.0), Vec64(d, 0.0)}) {
        require(c >= 1 && k >= 1 && d >= 1, "GmmClassifier: all counts must be positive");
    }

    // Uniform mixing coefficient, identical for every (class, component).
    double mix_log() const { return -std::log(static_cast<double>(components_per_class)); }

    GmmComponent& component(std::size_t c, std::size_t i) {
        return components[c * components_per_class + i];
    }
    const GmmComponent& component(std::size_t c, std::size_t i) const {
        return components[c * components_per_class + i];
    }

    void check_class(std::size_t c) const {
        if (c >= classes) throw std::out_of_range("GmmClassifier: class id out of range");
    }

    std::size_t parameter_count() const { return components.size() * 2 * dim; }

    // Means ~ N(0, 0.5^2) in the compressed space, unit variances.
    static GmmClassifier init(std::size_t c, std::size_t k, std::size_t d, Rng& rng) {
        GmmClassifier clf(c, k, d);
        for (auto& comp : clf.components) {
            for (double& m : comp.mean) m = rng.gaussian(0.0, 0.5);
        }
        return clf;
    }
};

// Gradients mirror the classifier layout; d_feature is the gradient routed
// back into the extractor output.
struct HlcGrads {
    std::vector<Vec64> d_mean;
    std::vector<Vec64> d_log_var;
    Vec64 d_feature;

    HlcGrads() = default;
    explicit HlcGrads(const GmmClassifier& clf)
        : d_mean(clf.components.size(), Vec64(clf.dim, 0.0)),
          d_log_var(clf.components.size(), Vec64(clf.dim, 0.0)),
          d_feature(clf.dim, 0.0) {}

    void zero() {
        for (auto& g : d_mean) std::fill(g.begin(), g.end(), 0.0);
        for (auto& g : d_log_var) std::fill(g.begin(), g.end(), 0.0);
        std::fill(d_feature.begin(), d_feature.end(), 0.0);
    }
};

// log N(z | mu, diag(exp(log_var)))
inline double component_log_density(const GmmComponent& comp, const Vec64& z) {
    require_same_dim(comp.dim(), z.size(), "component_log_density");
    double acc = 0.0;
    for (std::size_t d = 0; d < z.size(); ++d) {
        const double diff = z[d] - comp.mean[d];
        acc += kLogTwoPi + comp.log_var[d] + diff * diff * std::exp(-comp.log_var[d]);
    }
    return -0.5 * acc;
}

// Per-component score: log pi_ci + log N_ci(z).
inline Vec64 component_scores(const GmmClassifier& clf, std::size_t c, const Vec64& z) {
    clf.check_class(c);
    const double mix = clf.mix_log();
    Vec64 scores(clf.components_per_class);
    for (std::size_t i = 0; i < clf.components_per_class; ++i) {
        scores[i] = mix + component_log_density(clf.component(c, i), z);
    }
    return scores;
}

// log sum_i pi_ci N_ci(z): the class-conditional mixture log-density.
inline double class_log_marginal(const GmmClassifier& clf, std::size_t c, const Vec64& z) {
    return log_sum_exp(component_scores(clf, c, z));
}

// Best single component; ties broken toward the lowest index.
inline std::pair<double, std::size_t> class_log_max_component(const GmmClassifier& clf,
                                                              std::size_t c, const Vec64& z) {
    Vec64 scores = component_scores(clf, c, z);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return {scores[best], best};
}

// Posterior over components given the class: softmax of the scores.
inline Vec64 responsibilities(const GmmClassifier& clf, std::size_t c, const Vec64& z) {
    Vec64 scores = component_scores(clf, c, z);
    const double lse = log_sum_exp(scores);
    for (double& s : scores) s = std::exp(s - lse);
    return scores;
}

enum class PredictMode { max_component, marginal };

// Argmax over classes under a uniform class prior. max_component compares the
// best single component per class; marginal compares the full mixture.
inline std::size_t predict(const GmmClassifier& clf, const Vec64& z,
                           PredictMode mode = PredictMode::max_component) {
    require(clf.classes >= 1, "predict: empty classifier");
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < clf.classes; ++c) {
        const double score = mode == PredictMode::max_component
                                 ? class_log_max_component(clf, c, z).first
                                 : class_log_marginal(clf, c, z);
        if (score > best_score) {
            best_score = score;
            best = c;
        }
    }
    return best;
}

// Accumulates gradients of sum_{c,i} upstream(c,i) * log N_ci(z) into grads.
// Closed forms for the diagonal Gaussian:
//   d/d mu      =  (z - mu) / sigma^2
//   d/d log_var =  ((z - mu)^2 / sigma^2 - 1) / 2
//   d/d z       = -(z - mu) / sigma^2
inline void hlc_backward(const GmmClassifier& clf, const Vec64& z, const Mat64& upstream,
                         HlcGrads& grads) {
    require_same_dim(upstream.rows, clf.classes, "hlc_backward upstream rows");
    require_same_dim(upstream.cols, clf.components_per_class, "hlc_backward upstream cols");
    require_same_dim(z.size(), clf.dim, "hlc_backward feature");
    for (std::size_t c = 0; c < clf.classes; ++c) {
        for (std::size_t i = 0; i < clf.components_per_class; ++i) {
            const double w = upstream(c, i);
            if (w == 0.0) continue;
            const GmmComponent& comp = clf.component(c, i);
            const std::size_t idx = c * clf.components_per_class + i;
            for (std::size_t d = 0; d < clf.dim; ++d) {
                const double diff = z[d] - comp.mean[d];
                const double inv_var = std::exp(-comp.log_var[d]);
                const double pull = diff * inv_var;
                grads.d_mean[idx][d] += w * pull;
                grads.d_log_var[idx][d] += w * 0.5 * (diff * pull - 1.0);
                grads.d_feature[d] += w * -pull;
            }
        }
    }
}

}  // namespace gcdg
