// Evaluation and diagnostics: leave-one-domain-out accuracy, a diagonal
// Gaussian feature-entropy estimate, two-direction loss-landscape grids with
// per-block normalized directions, and exact information-theoretic quantities
// on finite alphabets (mutual information, the cross-domain information gap,
// and the source-risk lower bound it implies for invariant encodings).
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcdg/data.hpp"
#include "gcdg/numerics.hpp"
#include "gcdg/train.hpp"

namespace gcdg {

struct EvalResult {
    double target_acc = 0.0;
    double source_val_acc = 0.0;
};

// Accuracy on the held-out target domain and on the pooled source validation
// folds.
inline EvalResult evaluate(const TrainState& state, const Dataset& ds, const SplitPlan& split) {
    if (split.target_domain >= ds.num_domains) {
        throw std::runtime_error("evaluate: split does not match dataset (target domain "
                                 "out of range)");
    }
    if (ds.raw_dim != state.net.in_dim) {
        throw std::runtime_error("evaluate: checkpoint input dimension " +
                                 std::to_string(state.net.in_dim) + " does not match dataset " +
                                 std::to_string(ds.raw_dim));
    }
    EvalResult result;
    const auto tgt = target_indices(ds, split);
    std::size_t correct = 0;
    for (std::size_t s : tgt) {
        correct += (classify(state, ds.samples[s].x) == ds.samples[s].class_id);
    }
    result.target_acc = tgt.empty() ? 0.0 : static_cast<double>(correct) /
                                                static_cast<double>(tgt.size());
    std::size_t val_n = 0, val_correct = 0;
    for (const auto& fold : split.val_idx) {
        for (std::size_t s : fold) {
            val_correct += (classify(state, ds.samples[s].x) == ds.samples[s].class_id);
            ++val_n;
        }
    }
    result.source_val_acc = val_n == 0 ? 0.0 : static_cast<double>(val_correct) /
                                                   static_cast<double>(val_n);
    return result;
}

// Differential entropy of the diagonal-Gaussian fit, in nats:
//   H = 1/2 sum_d log(2 pi e (var_d + 1e-6))
// with unbiased per-dimension sample variances. The floor keeps constant
// dimensions finite.
inline double feature_entropy(const std::vector<Vec64>& features) {
    require(features.size() >= 2, "feature_entropy: need at least two samples");
    const std::size_t dim = features.front().size();
    for (const auto& f : features) require_same_dim(f.size(), dim, "feature_entropy");
    const double n = static_cast<double>(features.size());
    double entropy = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
        double mean = 0.0;
        for (const auto& f : features) mean += f[d];
        mean /= n;
        double ss = 0.0;
        for (const auto& f : features) {
            const double diff = f[d] - mean;
            ss += diff * diff;
        }
        const double var = ss / (n - 1.0);
        entropy += 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * (var + 1e-6));
    }
    return entropy;
}

struct LandscapeGrid {
    std::size_t radius = 0;
    double step = 0.0;
    std::vector<std::vector<Vec64>> directions;  // two directions, one Vec64 per parameter block
    Mat64 loss;  // (2R+1) x (2R+1); cell (R, R) is the unperturbed loss
};

// Mean validation loss at the current parameters; the quantity the landscape
// grid probes. Deterministic given the parameters.
inline double validation_loss(const TrainState& state, const Dataset& ds,
                              const std::vector<std::size_t>& idx) {
    return eval_loss_acc(state, ds, idx).first;
}

// Loss surface along two random parameter-space directions. Each direction
// is drawn N(0,1) per coordinate and then rescaled block-wise to the block's
// parameter norm, so blocks of very different scales are perturbed
// proportionally. Parameters are restored exactly afterwards.
inline LandscapeGrid loss_landscape(TrainState& state, const Dataset& ds,
                                    const std::vector<std::size_t>& val_idx, std::size_t radius,
                                    double step, std::uint64_t seed) {
    require(radius >= 1, "loss_landscape: radius must be >= 1");
    require(step > 0.0, "loss_landscape: step must be positive");
    auto blocks = param_blocks(state);
    Rng rng(seed, /*stream=*/5);

    std::vector<Vec64> saved;
    saved.reserve(blocks.size());
    for (const auto& b : blocks) saved.emplace_back(b.begin(), b.end());

    auto draw_direction = [&]() {
        std::vector<Vec64> dir(blocks.size());
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            dir[b].resize(blocks[b].size());
            double d_norm = 0.0, p_norm = 0.0;
            for (std::size_t j = 0; j < blocks[b].size(); ++j) {
                dir[b][j] = rng.normal();
                d_norm += dir[b][j] * dir[b][j];
                p_norm += blocks[b][j] * blocks[b][j];
            }
            const double scale = d_norm > 0.0 ? std::sqrt(p_norm) / std::sqrt(d_norm) : 0.0;
            for (double& v : dir[b]) v *= scale;
        }
        return dir;
    };
    const auto dir1 = draw_direction();
    const auto dir2 = draw_direction();

    const std::size_t side = 2 * radius + 1;
    LandscapeGrid grid{radius, step, {dir1, dir2}, Mat64(side, side)};
    for (std::size_t gi = 0; gi < side; ++gi) {
        const double alpha = (static_cast<double>(gi) - static_cast<double>(radius)) * step;
        for (std::size_t gj = 0; gj < side; ++gj) {
            const double beta = (static_cast<double>(gj) - static_cast<double>(radius)) * step;
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                for (std::size_t j = 0; j < blocks[b].size(); ++j) {
                    blocks[b][j] = saved[b][j] + alpha * dir1[b][j] + beta * dir2[b][j];
                }
            }
            grid.loss(gi, gj) = validation_loss(state, ds, val_idx);
        }
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        std::copy(saved[b].begin(), saved[b].end(), blocks[b].begin());
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Discrete information quantities
// ---------------------------------------------------------------------------

struct DiscreteJoint {
    Mat64 p;  // |X| x |Y|, entries non-negative, sums to 1

    void validate() const {
        require(p.rows >= 1 && p.cols >= 1, "DiscreteJoint: empty alphabet");
        double total = 0.0;
        for (double v : p.values) {
            require(v >= 0.0 && std::isfinite(v), "DiscreteJoint: probabilities must be "
                                                  "non-negative and finite");
            total += v;
        }
        require(std::abs(total - 1.0) <= 1e-12, "DiscreteJoint: probabilities must sum to 1");
    }

    static DiscreteJoint from_counts(const Mat64& counts) {
        double total = 0.0;
        for (double v : counts.values) total += v;
        require(total > 0.0, "DiscreteJoint: empty counts");
        DiscreteJoint j{counts};
        for (double& v : j.p.values) v /= total;
        return j;
    }
};

// I(X;Y) in bits; 0 log 0 terms drop out.
inline double mutual_information(const DiscreteJoint& joint) {
    joint.validate();
    const Mat64& p = joint.p;
    Vec64 px(p.rows, 0.0), py(p.cols, 0.0);
    for (std::size_t x = 0; x < p.rows; ++x) {
        for (std::size_t y = 0; y < p.cols; ++y) {
            px[x] += p(x, y);
            py[y] += p(x, y);
        }
    }
    double info = 0.0;
    for (std::size_t x = 0; x < p.rows; ++x) {
        for (std::size_t y = 0; y < p.cols; ++y) {
            const double pxy = p(x, y);
            if (pxy > 0.0) info += pxy * std::log2(pxy / (px[x] * py[y]));
        }
    }
    return info;
}

// H(Y|X) in bits.
inline double conditional_entropy_y_given_x(const DiscreteJoint& joint) {
    const Mat64& p = joint.p;
    double h = 0.0;
    for (std::size_t x = 0; x < p.rows; ++x) {
        double px = 0.0;
        for (std::size_t y = 0; y < p.cols; ++y) px += p(x, y);
        if (px <= 0.0) continue;
        for (std::size_t y = 0; y < p.cols; ++y) {
            const double pxy = p(x, y);
            if (pxy > 0.0) h -= pxy * std::log2(pxy / px);
        }
    }
    return h;
}

// Push a deterministic encoding through the joint: Z = phi(X).
inline DiscreteJoint apply_encoding(const DiscreteJoint& joint, const std::vector<std::size_t>& phi) {
    require_same_dim(phi.size(), joint.p.rows, "apply_encoding");
    std::size_t z_size = 0;
    for (std::size_t z : phi) z_size = std::max(z_size, z + 1);
    DiscreteJoint out{Mat64(z_size, joint.p.cols)};
    for (std::size_t x = 0; x < joint.p.rows; ++x) {
        for (std::size_t y = 0; y < joint.p.cols; ++y) {
            out.p(phi[x], y) += joint.p(x, y);
        }
    }
    return out;
}

struct InfoGapReport {
    Vec64 per_domain_info;       // I(X_i; Y) in bits
    std::size_t weakest_domain = 0;
    double delta_p = 0.0;        // sum of gaps to the weakest domain
    Vec64 per_domain_info_z;     // I(Z_i; Y) for the supplied encoding
    double risk_increase = 0.0;  // sum_i H(Y|Z_i) - sum_i H(Y|X_i)
    double margin = 0.0;         // risk_increase - delta_p
    bool encoding_invariant = false;  // p(Z_i, Y) identical across domains
};

// The information gap sum_{i != m*} (I(X_i;Y) - I(X_{m*};Y)) over domains,
// plus the exact source-risk increase of a deterministic shared encoding.
// For an encoding whose (Z, Y) joint is identical across domains the risk
// increase is guaranteed to be at least the gap.
inline InfoGapReport information_gap(const std::vector<DiscreteJoint>& joints,
                                     const std::vector<std::size_t>& phi) {
    require(joints.size() >= 2, "information_gap: need at least two domains");
    const std::size_t x_size = joints.front().p.rows;
    const std::size_t y_size = joints.front().p.cols;
    for (const auto& j : joints) {
        if (j.p.rows != x_size || j.p.cols != y_size) {
            throw std::runtime_error("information_gap: alphabet mismatch across domains");
        }
        j.validate();
    }
    InfoGapReport report;
    report.per_domain_info.resize(joints.size());
    for (std::size_t i = 0; i < joints.size(); ++i) {
        report.per_domain_info[i] = mutual_information(joints[i]);
        if (report.per_domain_info[i] < report.per_domain_info[report.weakest_domain]) {
            report.weakest_domain = i;
        }
    }
    for (double info : report.per_domain_info) {
        report.delta_p += info - report.per_domain_info[report.weakest_domain];
    }

    std::vector<DiscreteJoint> collapsed;
    collapsed.reserve(joints.size());
    for (const auto& j : joints) collapsed.push_back(apply_encoding(j, phi));
    report.per_domain_info_z.resize(joints.size());
    double sum_h_z = 0.0, sum_h_x = 0.0;
    for (std::size_t i = 0; i < joints.size(); ++i) {
        report.per_domain_info_z[i] = mutual_information(collapsed[i]);
        sum_h_z += conditional_entropy_y_given_x(collapsed[i]);
        sum_h_x += conditional_entropy_y_given_x(joints[i]);
    }
    report.risk_increase = sum_h_z - sum_h_x;
    report.margin = report.risk_increase - report.delta_p;

    report.encoding_invariant = [&] {
        for (std::size_t i = 1; i < collapsed.size(); ++i) {
            for (std::size_t idx = 0; idx < collapsed[0].p.values.size(); ++idx) {
                if (std::abs(collapsed[i].p.values[idx] - collapsed[0].p.values[idx]) > 1e-12) {
                    return false;
                }
            }
        }
        return true;
    }();
    return report;
}

// ---------------------------------------------------------------------------
// Joints file
// ---------------------------------------------------------------------------

struct JointsFile {
    std::vector<DiscreteJoint> joints;
    std::vector<std::size_t> encoding;  // empty = none supplied
};

// Format: `domain <id>` followed by one comma-separated row per X symbol;
// optional `encoding z0,z1,...` line mapping each X symbol to a Z symbol.
// Malformed content throws invalid_argument; an unreadable path is a runtime
// (I/O) error.
inline JointsFile load_joints(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_joints: cannot open " + path);
    JointsFile out;
    std::vector<Vec64> rows;
    std::size_t line_no = 0;
    auto flush_domain = [&]() {
        if (rows.empty()) return;
        Mat64 p(rows.size(), rows.front().size());
        for (std::size_t x = 0; x < rows.size(); ++x) {
            if (rows[x].size() != p.cols) {
                throw std::invalid_argument(path + ": ragged rows in domain block ending at line " +
                                            std::to_string(line_no));
            }
            for (std::size_t y = 0; y < p.cols; ++y) p(x, y) = rows[x][y];
        }
        DiscreteJoint j{p};
        j.validate();
        out.joints.push_back(std::move(j));
        rows.clear();
    };
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        if (trimmed.rfind("domain", 0) == 0) {
            flush_domain();
            continue;
        }
        if (trimmed.rfind("encoding", 0) == 0) {
            std::stringstream ss(trimmed.substr(8));
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                try {
                    out.encoding.push_back(std::stoul(detail::trim(tok)));
                } catch (const std::exception&) {
                    throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                                ": malformed encoding entry '" + tok + "'");
                }
            }
            continue;
        }
        Vec64 row;
        std::stringstream ss(trimmed);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                row.push_back(std::stod(detail::trim(tok)));
            } catch (const std::exception&) {
                throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                            ": malformed probability '" + tok + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    flush_domain();
    if (out.joints.empty()) throw std::invalid_argument(path + ": no domain blocks found");
    return out;
}

}  // namespace gcdg
