// Spurious Correlation Blocking: rank feature dimensions by their activation
// under the sample's assigned component and exchange the low-activation ones
// between randomly paired same-class samples. Low activation marks dimensions
// that fit the component poorly; exchanging them within the class scrambles
// patterns that are not stable class evidence.
#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "gcdg/hlc.hpp"
#include "gcdg/numerics.hpp"

namespace gcdg {

struct ScbMask {
    std::vector<std::uint8_t> bits;  // 0 = low-activation (exchanged), 1 = kept
    double q = 0.0;

    std::size_t zeros() const {
        std::size_t n = 0;
        for (auto b : bits) n += (b == 0);
        return n;
    }
};

struct ScbConfig {
    double q = 20.0;
    bool enabled = true;
};

// Per-dimension log-density under the assigned component, up to the constant
// -log(2*pi)/2: a_d = -log_var_d - (z_d - mu_d)^2 / (2 sigma_d^2).
inline Vec64 activation(const GmmComponent& comp, const Vec64& z) {
    require_same_dim(comp.dim(), z.size(), "activation");
    Vec64 a(z.size());
    for (std::size_t d = 0; d < z.size(); ++d) {
        const double diff = z[d] - comp.mean[d];
        a[d] = -comp.log_var[d] - 0.5 * diff * diff * std::exp(-comp.log_var[d]);
    }
    return a;
}

// Zero out exactly ceil(q*D/100) dimensions: the lowest-activation ones, with
// index order breaking ties so the cardinality is exact even on tied inputs.
inline ScbMask build_mask(const Vec64& a, double q) {
    require(!a.empty(), "build_mask: empty activation vector");
    require(q > 0.0 && q < 100.0, "build_mask: q must be in (0,100)");
    const std::size_t low = nearest_rank(a.size(), q);
    std::vector<std::size_t> order(a.size());
    for (std::size_t d = 0; d < order.size(); ++d) order[d] = d;
    std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
        if (a[l] != a[r]) return a[l] < a[r];
        return l < r;
    });
    ScbMask mask{std::vector<std::uint8_t>(a.size(), 1), q};
    for (std::size_t j = 0; j < low; ++j) mask.bits[order[j]] = 0;
    return mask;
}

// Each sample keeps its own high-activation dimensions and receives the
// partner's values on the partner's low-activation dimensions:
//   z_m' = z_m (*) M_m + z_n (*) (1 - M_n)
//   z_n' = z_n (*) M_n + z_m (*) (1 - M_m)
// When the masks agree this swaps the masked coordinates; when they differ a
// coordinate can be doubled or dropped, which is accepted as part of the
// perturbation.
inline std::pair<Vec64, Vec64> shuffle_pair(const Vec64& z_m, const Vec64& z_n,
                                            const ScbMask& mask_m, const ScbMask& mask_n) {
    require_same_dim(z_m.size(), z_n.size(), "shuffle_pair");
    require_same_dim(z_m.size(), mask_m.bits.size(), "shuffle_pair mask_m");
    require_same_dim(z_n.size(), mask_n.bits.size(), "shuffle_pair mask_n");
    Vec64 out_m(z_m.size()), out_n(z_n.size());
    for (std::size_t d = 0; d < z_m.size(); ++d) {
        out_m[d] = z_m[d] * mask_m.bits[d] + z_n[d] * (1 - mask_n.bits[d]);
        out_n[d] = z_n[d] * mask_n.bits[d] + z_m[d] * (1 - mask_m.bits[d]);
    }
    return {std::move(out_m), std::move(out_n)};
}

// Record of one applied exchange, kept so gradients can be routed back to the
// samples whose forward pass produced each coordinate.
struct ScbPair {
    std::size_t m = 0;
    std::size_t n = 0;
    ScbMask mask_m;
    ScbMask mask_n;
};

struct ScbApplication {
    std::vector<Vec64> features;  // post-exchange batch, same order as input
    std::vector<ScbPair> pairs;
};

// Pair samples uniformly at random within each class (odd one out untouched)
// and exchange their low-activation dimensions. assignments[s] is the
// component index of sample s within its own class mixture. Disabled -> the
// input passes through bit-for-bit.
inline ScbApplication apply_scb(const std::vector<Vec64>& batch_features,
                                const std::vector<std::size_t>& class_labels,
                                const GmmClassifier& clf,
                                const std::vector<std::size_t>& assignments,
                                const ScbConfig& cfg, Rng& rng) {
    require_same_dim(batch_features.size(), class_labels.size(), "apply_scb labels");
    ScbApplication out;
    out.features = batch_features;
    if (!cfg.enabled || batch_features.empty()) return out;
    require_same_dim(batch_features.size(), assignments.size(), "apply_scb assignments");

    std::vector<std::vector<std::size_t>> by_class(clf.classes);
    for (std::size_t s = 0; s < class_labels.size(); ++s) {
        clf.check_class(class_labels[s]);
        by_class[class_labels[s]].push_back(s);
    }
    for (auto& members : by_class) {
        rng.shuffle(members);
        for (std::size_t j = 0; j + 1 < members.size(); j += 2) {
            const std::size_t m = members[j];
            const std::size_t n = members[j + 1];
            const auto& comp_m = clf.component(class_labels[m], assignments[m]);
            const auto& comp_n = clf.component(class_labels[n], assignments[n]);
            ScbMask mask_m = build_mask(activation(comp_m, batch_features[m]), cfg.q);
            ScbMask mask_n = build_mask(activation(comp_n, batch_features[n]), cfg.q);
            auto [zm, zn] = shuffle_pair(batch_features[m], batch_features[n], mask_m, mask_n);
            out.features[m] = std::move(zm);
            out.features[n] = std::move(zn);
            out.pairs.push_back({m, n, std::move(mask_m), std::move(mask_n)});
        }
    }
    return out;
}

// Chain rule through the exchange with the masks held constant: z_m enters
// z_m' on M_m and z_n' on (1 - M_m), so its gradient collects both routes.
inline void scb_route_grads(std::vector<Vec64>& d_features, const ScbApplication& app) {
    for (const auto& pair : app.pairs) {
        Vec64& gm = d_features[pair.m];
        Vec64& gn = d_features[pair.n];
        Vec64 orig_m(gm.size()), orig_n(gn.size());
        for (std::size_t d = 0; d < gm.size(); ++d) {
            orig_m[d] = gm[d] * pair.mask_m.bits[d] + gn[d] * (1 - pair.mask_m.bits[d]);
            orig_n[d] = gn[d] * pair.mask_n.bits[d] + gm[d] * (1 - pair.mask_n.bits[d]);
        }
        gm = std::move(orig_m);
        gn = std::move(orig_n);
    }
}

}  // namespace gcdg
