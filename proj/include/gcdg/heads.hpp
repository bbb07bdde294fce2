// Discriminative baseline heads trained through the same loop as the
// generative classifier: a plain affine (linear probe) head and a
// one-hidden-layer tanh MLP head whose parameter count is required to be at
// least that of the generative classifier it stands in for.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gcdg/numerics.hpp"

namespace gcdg {

struct LinearHead {
    Mat64 w;  // classes x dim
    Vec64 b;

    std::size_t classes() const { return w.rows; }
    std::size_t dim() const { return w.cols; }
    std::size_t parameter_count() const { return w.values.size() + b.size(); }

    static LinearHead init(std::size_t classes, std::size_t dim, Rng& rng) {
        require(classes >= 1 && dim >= 1, "LinearHead: counts must be positive");
        LinearHead head{Mat64(classes, dim), Vec64(classes, 0.0)};
        const double s = 1.0 / std::sqrt(static_cast<double>(dim));
        for (double& v : head.w.values) v = rng.gaussian(0.0, s);
        return head;
    }
};

struct MlpHead {
    Mat64 w1;  // hidden x dim
    Vec64 b1;
    Mat64 w2;  // classes x hidden
    Vec64 b2;

    std::size_t classes() const { return w2.rows; }
    std::size_t dim() const { return w1.cols; }
    std::size_t hidden() const { return w1.rows; }
    std::size_t parameter_count() const {
        return w1.values.size() + b1.size() + w2.values.size() + b2.size();
    }

    // hidden = 0 picks the smallest width that matches the generative
    // classifier's parameter budget (2*K*D per class); the count is checked
    // either way so the head never under-parameterizes the comparison.
    static MlpHead init(std::size_t classes, std::size_t dim, std::size_t k_budget,
                        std::size_t hidden, Rng& rng) {
        require(classes >= 1 && dim >= 1, "MlpHead: counts must be positive");
        const std::size_t budget = classes * k_budget * 2 * dim;
        if (hidden == 0) {
            const std::size_t per_unit = dim + 1 + classes;
            hidden = (budget + classes + per_unit - 1) / per_unit;
            hidden = std::max<std::size_t>(hidden, 4);
        }
        MlpHead head{Mat64(hidden, dim), Vec64(hidden, 0.0), Mat64(classes, hidden),
                     Vec64(classes, 0.0)};
        if (head.parameter_count() < budget) {
            throw std::invalid_argument("MlpHead: parameter count " +
                                        std::to_string(head.parameter_count()) +
                                        " is below the generative classifier budget " +
                                        std::to_string(budget));
        }
        const double s1 = 1.0 / std::sqrt(static_cast<double>(dim));
        const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
        for (double& v : head.w1.values) v = rng.gaussian(0.0, s1);
        for (double& v : head.w2.values) v = rng.gaussian(0.0, s2);
        return head;
    }
};

inline Vec64 head_logits(const LinearHead& head, const Vec64& z) {
    require_same_dim(z.size(), head.dim(), "head_logits(linear)");
    Vec64 out = head.b;
    matvec_acc(head.w, z, out);
    return out;
}

struct MlpHeadCache {
    Vec64 z;
    Vec64 hidden_act;
};

inline std::pair<Vec64, MlpHeadCache> head_logits(const MlpHead& head, const Vec64& z) {
    require_same_dim(z.size(), head.dim(), "head_logits(mlp)");
    Vec64 h = head.b1;
    matvec_acc(head.w1, z, h);
    for (double& v : h) v = std::tanh(v);
    Vec64 out = head.b2;
    matvec_acc(head.w2, h, out);
    return {std::move(out), MlpHeadCache{z, std::move(h)}};
}

struct LinearHeadGrads {
    Mat64 d_w;
    Vec64 d_b;

    LinearHeadGrads() = default;
    explicit LinearHeadGrads(const LinearHead& head)
        : d_w(head.w.rows, head.w.cols), d_b(head.b.size(), 0.0) {}

    void zero() {
        std::fill(d_w.values.begin(), d_w.values.end(), 0.0);
        std::fill(d_b.begin(), d_b.end(), 0.0);
    }
};

struct MlpHeadGrads {
    Mat64 d_w1;
    Vec64 d_b1;
    Mat64 d_w2;
    Vec64 d_b2;

    MlpHeadGrads() = default;
    explicit MlpHeadGrads(const MlpHead& head)
        : d_w1(head.w1.rows, head.w1.cols), d_b1(head.b1.size(), 0.0),
          d_w2(head.w2.rows, head.w2.cols), d_b2(head.b2.size(), 0.0) {}

    void zero() {
        std::fill(d_w1.values.begin(), d_w1.values.end(), 0.0);
        std::fill(d_b1.begin(), d_b1.end(), 0.0);
        std::fill(d_w2.values.begin(), d_w2.values.end(), 0.0);
        std::fill(d_b2.begin(), d_b2.end(), 0.0);
    }
};

// Accumulates gradients of <d_logits, logits(z)>; d_feature collects the
// gradient with respect to z.
inline void head_backward(const LinearHead& head, const Vec64& z, const Vec64& d_logits,
                          LinearHeadGrads& grads, Vec64& d_feature) {
    require_same_dim(d_logits.size(), head.classes(), "head_backward(linear)");
    outer_acc(grads.d_w, 1.0, d_logits, z);
    for (std::size_t c = 0; c < d_logits.size(); ++c) grads.d_b[c] += d_logits[c];
    matvec_transposed_acc(head.w, d_logits, d_feature);
}

inline void head_backward(const MlpHead& head, const MlpHeadCache& cache, const Vec64& d_logits,
                          MlpHeadGrads& grads, Vec64& d_feature) {
    require_same_dim(d_logits.size(), head.classes(), "head_backward(mlp)");
    outer_acc(grads.d_w2, 1.0, d_logits, cache.hidden_act);
    for (std::size_t c = 0; c < d_logits.size(); ++c) grads.d_b2[c] += d_logits[c];
    Vec64 d_hidden(head.hidden(), 0.0);
    matvec_transposed_acc(head.w2, d_logits, d_hidden);
    for (std::size_t h = 0; h < head.hidden(); ++h) {
        const double t = cache.hidden_act[h];
        d_hidden[h] *= 1.0 - t * t;
    }
    outer_acc(grads.d_w1, 1.0, d_hidden, cache.z);
    for (std::size_t h = 0; h < head.hidden(); ++h) grads.d_b1[h] += d_hidden[h];
    matvec_transposed_acc(head.w1, d_hidden, d_feature);
}

}  // namespace gcdg
