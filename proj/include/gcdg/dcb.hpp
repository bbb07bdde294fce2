// Diverse Component Balancing: entropic optimal transport over the per-class
// cost O(n,i) = -log p(z_n | c, i), solved by Sinkhorn-Knopp scaling so that
// every sample row is a probability vector and every component column tends
// toward the uniform share N_c / K. The balanced posterior replaces plain
// responsibilities when assigning samples to components.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcdg/hlc.hpp"
#include "gcdg/numerics.hpp"

namespace gcdg {

struct CostMatrix {
    Mat64 values;  // N_c x K, row-min shifted to non-negative
};

struct TransportPlan {
    Mat64 gamma;  // N_c x K, rows exactly stochastic
    std::size_t iterations_run = 0;
    double marginal_violation = 0.0;  // max abs deviation from the prescribed marginals
};

struct DcbConfig {
    double lambda = 1.0;
    std::size_t iterations = 3;
    bool enabled = true;
};

// Negative component log-densities, then each row shifted by its minimum.
// The shift preserves per-row argmins and keeps the kernel exp(-lambda*O)
// in a representable range (the best entry of each row maps to exactly 1).
inline CostMatrix build_cost(const GmmClassifier& clf, std::size_t c,
                             const std::vector<Vec64>& batch_z) {
    clf.check_class(c);
    require(!batch_z.empty(), "build_cost: empty class slice");
    require(clf.components_per_class >= 2, "build_cost: need at least 2 components");
    const std::size_t k = clf.components_per_class;
    CostMatrix cost{Mat64(batch_z.size(), k)};
    for (std::size_t n = 0; n < batch_z.size(); ++n) {
        double row_min = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < k; ++i) {
            const double o = -component_log_density(clf.component(c, i), batch_z[n]);
            cost.values(n, i) = o;
            row_min = std::min(row_min, o);
        }
        for (std::size_t i = 0; i < k; ++i) cost.values(n, i) -= row_min;
    }
    return cost;
}

// Gamma = diag(a) * exp(-lambda * O) * diag(b). One alternation rescales the
// columns to sum N/K and then the rows to sum 1, so after any number of full
// alternations the rows are exactly stochastic and the residual column
// deviation is reported rather than enforced.
inline TransportPlan sinkhorn(const CostMatrix& cost, const DcbConfig& cfg) {
    require(cfg.lambda > 0.0, "sinkhorn: lambda must be positive");
    require(cfg.iterations >= 1, "sinkhorn: need at least one iteration");
    const std::size_t n_rows = cost.values.rows;
    const std::size_t n_cols = cost.values.cols;
    require(n_rows >= 1 && n_cols >= 1, "sinkhorn: empty cost matrix");

    Mat64 kernel(n_rows, n_cols);
    for (std::size_t idx = 0; idx < kernel.values.size(); ++idx) {
        kernel.values[idx] = std::exp(-cfg.lambda * cost.values.values[idx]);
    }

    const double col_target = static_cast<double>(n_rows) / static_cast<double>(n_cols);
    Vec64 row_scale(n_rows, 1.0);
    Vec64 col_scale(n_cols, 1.0);

    auto col_sum = [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t n = 0; n < n_rows; ++n) s += row_scale[n] * kernel(n, i) * col_scale[i];
        return s;
    };
    auto row_sum = [&](std::size_t n) {
        double s = 0.0;
        for (std::size_t i = 0; i < n_cols; ++i) s += row_scale[n] * kernel(n, i) * col_scale[i];
        return s;
    };

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        for (std::size_t i = 0; i < n_cols; ++i) {
            const double s = col_sum(i);
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw NumericError("sinkhorn: column " + std::to_string(i) +
                                   " underflowed to zero mass");
            }
            col_scale[i] *= col_target / s;
        }
        for (std::size_t n = 0; n < n_rows; ++n) {
            const double s = row_sum(n);
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw NumericError("sinkhorn: row " + std::to_string(n) +
                                   " underflowed to zero mass");
            }
            row_scale[n] /= s;
        }
    }

    TransportPlan plan{Mat64(n_rows, n_cols), cfg.iterations, 0.0};
    for (std::size_t n = 0; n < n_rows; ++n) {
        for (std::size_t i = 0; i < n_cols; ++i) {
            plan.gamma(n, i) = row_scale[n] * kernel(n, i) * col_scale[i];
        }
    }
    double violation = 0.0;
    for (std::size_t i = 0; i < n_cols; ++i) {
        double s = 0.0;
        for (std::size_t n = 0; n < n_rows; ++n) s += plan.gamma(n, i);
        violation = std::max(violation, std::abs(s - col_target));
    }
    for (std::size_t n = 0; n < n_rows; ++n) {
        double s = 0.0;
        for (std::size_t i = 0; i < n_cols; ++i) s += plan.gamma(n, i);
        violation = std::max(violation, std::abs(s - 1.0));
    }
    plan.marginal_violation = violation;
    return plan;
}

// Hard component per sample: argmax of the posterior row, lowest index wins.
inline std::vector<std::size_t> assign(const TransportPlan& plan) {
    std::vector<std::size_t> out(plan.gamma.rows);
    for (std::size_t n = 0; n < plan.gamma.rows; ++n) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < plan.gamma.cols; ++i) {
            if (plan.gamma(n, i) > plan.gamma(n, best)) best = i;
        }
        out[n] = best;
    }
    return out;
}

// The DCB-disabled fallback: the posterior is the plain per-sample
// responsibility, with the column deviation still reported for diagnostics.
inline TransportPlan responsibilities_plan(const GmmClassifier& clf, std::size_t c,
                                           const std::vector<Vec64>& batch_z) {
    clf.check_class(c);
    require(!batch_z.empty(), "responsibilities_plan: empty class slice");
    const std::size_t k = clf.components_per_class;
    TransportPlan plan{Mat64(batch_z.size(), k), 0, 0.0};
    for (std::size_t n = 0; n < batch_z.size(); ++n) {
        Vec64 r = responsibilities(clf, c, batch_z[n]);
        for (std::size_t i = 0; i < k; ++i) plan.gamma(n, i) = r[i];
    }
    const double col_target = static_cast<double>(batch_z.size()) / static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i) {
        double s = 0.0;
        for (std::size_t n = 0; n < batch_z.size(); ++n) s += plan.gamma(n, i);
        plan.marginal_violation = std::max(plan.marginal_violation, std::abs(s - col_target));
    }
    return plan;
}

}  // namespace gcdg
