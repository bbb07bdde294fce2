// Trainable feature pathway: a one-hidden-layer tanh MLP followed by an
// affine compression to the classifier dimension D, with exact hand-written
// forward/backward passes. An identity mode (z = x, no parameters) exists for
// experiments that need the feature geometry pinned.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gcdg/numerics.hpp"

namespace gcdg {

struct FeatureNet {
    bool identity = false;
    std::size_t in_dim = 0;
    std::size_t hidden = 0;
    std::size_t out_dim = 0;
    Mat64 w1;  // hidden x in
    Vec64 b1;
    Mat64 w2;  // out x hidden
    Vec64 b2;
    // Bumped on every parameter update; forward caches are stamped with it so
    // a backward pass against a mutated net is rejected instead of silently
    // producing stale gradients.
    std::uint64_t revision = 0;

    static FeatureNet make_identity(std::size_t dim) {
        FeatureNet net;
        net.identity = true;
        net.in_dim = dim;
        net.out_dim = dim;
        return net;
    }

    // Entries ~ N(0, 1/sqrt(fan_in)), biases zero.
    static FeatureNet init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
        require(in >= 1 && hidden >= 1 && out >= 1, "FeatureNet: all dims must be positive");
        FeatureNet net;
        net.in_dim = in;
        net.hidden = hidden;
        net.out_dim = out;
        net.w1 = Mat64(hidden, in);
        net.b1 = Vec64(hidden, 0.0);
        net.w2 = Mat64(out, hidden);
        net.b2 = Vec64(out, 0.0);
        const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
        const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
        for (double& w : net.w1.values) w = rng.gaussian(0.0, s1);
        for (double& w : net.w2.values) w = rng.gaussian(0.0, s2);
        return net;
    }

    std::size_t parameter_count() const {
        return identity ? 0 : w1.values.size() + b1.size() + w2.values.size() + b2.size();
    }
};

struct ForwardCache {
    Vec64 x;
    Vec64 hidden_act;  // tanh(w1 x + b1)
    std::uint64_t revision = 0;
};

// z = w2 * tanh(w1 x + b1) + b2
inline std::pair<Vec64, ForwardCache> feature_forward(const FeatureNet& net, const Vec64& x) {
    require_same_dim(x.size(), net.in_dim, "feature_forward");
    if (net.identity) return {x, ForwardCache{x, {}, net.revision}};
    Vec64 h = net.b1;
    matvec_acc(net.w1, x, h);
    for (double& v : h) v = std::tanh(v);
    Vec64 z = net.b2;
    matvec_acc(net.w2, h, z);
    return {std::move(z), ForwardCache{x, std::move(h), net.revision}};
}

struct FeatureGrads {
    Mat64 d_w1;
    Vec64 d_b1;
    Mat64 d_w2;
    Vec64 d_b2;

    FeatureGrads() = default;
    explicit FeatureGrads(const FeatureNet& net)
        : d_w1(net.identity ? Mat64() : Mat64(net.hidden, net.in_dim)),
          d_b1(net.identity ? 0 : net.hidden, 0.0),
          d_w2(net.identity ? Mat64() : Mat64(net.out_dim, net.hidden)),
          d_b2(net.identity ? 0 : net.out_dim, 0.0) {}

    void zero() {
        std::fill(d_w1.values.begin(), d_w1.values.end(), 0.0);
        std::fill(d_b1.begin(), d_b1.end(), 0.0);
        std::fill(d_w2.values.begin(), d_w2.values.end(), 0.0);
        std::fill(d_b2.begin(), d_b2.end(), 0.0);
    }
};

// Accumulates exact gradients of <d_z, z(x)> into grads. Identity mode is a
// no-op (there are no parameters to attribute to).
inline void feature_backward(const FeatureNet& net, const ForwardCache& cache, const Vec64& d_z,
                             FeatureGrads& grads) {
    if (net.identity) return;
    if (cache.revision != net.revision) {
        throw std::logic_error("feature_backward: cache is stale (parameters changed since forward)");
    }
    require_same_dim(d_z.size(), net.out_dim, "feature_backward");
    outer_acc(grads.d_w2, 1.0, d_z, cache.hidden_act);
    for (std::size_t o = 0; o < net.out_dim; ++o) grads.d_b2[o] += d_z[o];
    Vec64 d_hidden(net.hidden, 0.0);
    matvec_transposed_acc(net.w2, d_z, d_hidden);
    for (std::size_t h = 0; h < net.hidden; ++h) {
        const double t = cache.hidden_act[h];
        d_hidden[h] *= 1.0 - t * t;  // tanh'
    }
    outer_acc(grads.d_w1, 1.0, d_hidden, cache.x);
    for (std::size_t h = 0; h < net.hidden; ++h) grads.d_b1[h] += d_hidden[h];
}

}  // namespace gcdg
