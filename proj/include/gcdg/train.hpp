// End-to-end training loop: per-domain batch assembly, the low-activation
// feature exchange, the balanced component posterior, the combined
// cross-entropy + component-likelihood loss with exact gradients, and Adam
// updates with a staged learning-rate decay. The discriminative baseline
// heads run through the same loop. Checkpoints capture the whole mutable
// state (parameters, optimizer moments, random streams) so a reloaded run
// continues bit-identically.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gcdg/config.hpp"
#include "gcdg/data.hpp"
#include "gcdg/dcb.hpp"
#include "gcdg/features.hpp"
#include "gcdg/heads.hpp"
#include "gcdg/hlc.hpp"
#include "gcdg/numerics.hpp"
#include "gcdg/scb.hpp"

namespace gcdg {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    std::vector<Vec64> m;
    std::vector<Vec64> v;
    std::uint64_t step = 0;

    static AdamState for_blocks(const std::vector<std::span<double>>& blocks) {
        AdamState state;
        state.m.reserve(blocks.size());
        state.v.reserve(blocks.size());
        for (const auto& b : blocks) {
            state.m.emplace_back(b.size(), 0.0);
            state.v.emplace_back(b.size(), 0.0);
        }
        return state;
    }
};

// One bias-corrected Adam update over a block list. grads must mirror params.
inline void adam_step(const std::vector<std::span<double>>& params,
                      const std::vector<std::span<const double>>& grads, AdamState& state,
                      double lr) {
    require_same_dim(params.size(), grads.size(), "adam_step blocks");
    require_same_dim(params.size(), state.m.size(), "adam_step moments");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.step));
    for (std::size_t b = 0; b < params.size(); ++b) {
        require_same_dim(params[b].size(), grads[b].size(), "adam_step block size");
        auto& m = state.m[b];
        auto& v = state.v[b];
        for (std::size_t j = 0; j < params[b].size(); ++j) {
            const double g = grads[b][j];
            m[j] = AdamState::kBeta1 * m[j] + (1.0 - AdamState::kBeta1) * g;
            v[j] = AdamState::kBeta2 * v[j] + (1.0 - AdamState::kBeta2) * g * g;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            params[b][j] -= lr * m_hat / (std::sqrt(v_hat) + AdamState::kEps);
        }
    }
}

// Staged decay: full rate for the first 60% of the run, x0.1 until 80%, x0.01
// afterwards.
inline double lr_at(std::size_t iter, std::size_t total, double base_lr) {
    const double frac = static_cast<double>(iter) / static_cast<double>(total);
    if (frac < 0.6) return base_lr;
    if (frac < 0.8) return 0.1 * base_lr;
    return 0.01 * base_lr;
}

// ---------------------------------------------------------------------------
// Mutable training state
// ---------------------------------------------------------------------------

using Classifier = std::variant<GmmClassifier, LinearHead, MlpHead>;

struct TrainState {
    RunConfig cfg;
    FeatureNet net;
    Classifier clf;
    AdamState adam;
    std::uint64_t iter = 0;
    Rng rng_batch{0, 2};
    Rng rng_scb{0, 3};
};

// Parameter blocks in a fixed order: extractor first, then the classifier.
// Adam moments, landscape directions and checkpoints all follow this order.
inline std::vector<std::span<double>> param_blocks(TrainState& state) {
    std::vector<std::span<double>> blocks;
    if (!state.net.identity) {
        blocks.emplace_back(state.net.w1.values);
        blocks.emplace_back(state.net.b1);
        blocks.emplace_back(state.net.w2.values);
        blocks.emplace_back(state.net.b2);
    }
    if (auto* gmm = std::get_if<GmmClassifier>(&state.clf)) {
        for (auto& comp : gmm->components) {
            blocks.emplace_back(comp.mean);
            blocks.emplace_back(comp.log_var);
        }
    } else if (auto* lin = std::get_if<LinearHead>(&state.clf)) {
        blocks.emplace_back(lin->w.values);
        blocks.emplace_back(lin->b);
    } else {
        auto& mlp = std::get<MlpHead>(state.clf);
        blocks.emplace_back(mlp.w1.values);
        blocks.emplace_back(mlp.b1);
        blocks.emplace_back(mlp.w2.values);
        blocks.emplace_back(mlp.b2);
    }
    return blocks;
}

inline TrainState init_state(const RunConfig& cfg, const Dataset& ds) {
    cfg.validate();
    require(ds.num_classes >= 1 && ds.raw_dim >= 1, "init_state: empty dataset");
    TrainState state;
    state.cfg = cfg;
    Rng rng_init(cfg.seed, /*stream=*/4);
    const std::size_t dim_d = cfg.net_identity ? ds.raw_dim : cfg.net_dim_d;
    state.cfg.net_dim_d = dim_d;
    state.net = cfg.net_identity
                    ? FeatureNet::make_identity(ds.raw_dim)
                    : FeatureNet::init(ds.raw_dim, cfg.net_hidden, dim_d, rng_init);
    switch (cfg.classifier_kind) {
        case ClassifierKind::generative:
            state.clf = GmmClassifier::init(ds.num_classes, cfg.k, dim_d, rng_init);
            break;
        case ClassifierKind::linear:
            state.clf = LinearHead::init(ds.num_classes, dim_d, rng_init);
            break;
        case ClassifierKind::mlp:
            state.clf = MlpHead::init(ds.num_classes, dim_d, cfg.k, cfg.mlp_hidden, rng_init);
            break;
    }
    state.adam = AdamState::for_blocks(param_blocks(state));
    state.rng_batch = Rng(cfg.seed, /*stream=*/2);
    state.rng_scb = Rng(cfg.seed, /*stream=*/3);
    return state;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

// Balanced posterior per class present in the batch, plus each sample's row.
struct ClassPlans {
    std::map<std::size_t, TransportPlan> plans;
    std::vector<std::size_t> row_of_sample;  // row index within the class plan
};

inline ClassPlans compute_plans(const GmmClassifier& clf, const std::vector<Vec64>& feats,
                                const std::vector<std::size_t>& labels, const DcbConfig& dcb) {
    ClassPlans out;
    out.row_of_sample.resize(feats.size());
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t s = 0; s < feats.size(); ++s) {
        out.row_of_sample[s] = members[labels[s]].size();
        members[labels[s]].push_back(s);
    }
    for (const auto& [c, idx] : members) {
        std::vector<Vec64> class_feats;
        class_feats.reserve(idx.size());
        for (std::size_t s : idx) class_feats.push_back(feats[s]);
        // The balancing constraint only exists across >= 2 components.
        if (dcb.enabled && clf.components_per_class >= 2) {
            out.plans.emplace(c, sinkhorn(build_cost(clf, c, class_feats), dcb));
        } else {
            out.plans.emplace(c, responsibilities_plan(clf, c, class_feats));
        }
    }
    return out;
}

struct LossStats {
    double loss = 0.0;
    double ce = 0.0;
    double nll = 0.0;
    std::size_t correct = 0;
    std::size_t count = 0;
};

// Per-sample loss and gradients for the generative classifier:
//   CE  = -log softmax_c(class_log_marginal)[label]
//   NLL = -(mix_log + log N) of the posterior-assigned component (hard) or
//         the posterior-weighted component average (soft)
// The posterior row is a constant here; it never contributes a gradient path.
// Accumulates scaled upstream weights into grads and the feature gradient
// into d_feature.
inline double gmm_sample_loss_backward(const GmmClassifier& clf, const Vec64& z,
                                       std::size_t label, std::span<const double> gamma_row,
                                       const RunConfig& cfg, double inv_count, HlcGrads& grads,
                                       Vec64& d_feature, double& ce_out, double& nll_out,
                                       std::size_t& predicted) {
    const std::size_t n_classes = clf.classes;
    const std::size_t k = clf.components_per_class;
    Mat64 scores(n_classes, k);
    Vec64 marginals(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) {
        const double mix = clf.mix_log();
        for (std::size_t i = 0; i < k; ++i) {
            scores(c, i) = mix + component_log_density(clf.component(c, i), z);
        }
        marginals[c] = log_sum_exp(scores.row(c));
    }
    const double lse_all = log_sum_exp(marginals);
    const double ce = lse_all - marginals[label];

    predicted = predict(clf, z, cfg.predict_mode);

    Mat64 upstream(n_classes, k);
    for (std::size_t c = 0; c < n_classes; ++c) {
        const double d_marginal = (std::exp(marginals[c] - lse_all) - (c == label ? 1.0 : 0.0)) *
                                  inv_count;
        for (std::size_t i = 0; i < k; ++i) {
            // d marginal / d score = within-class responsibility
            upstream(c, i) = d_marginal * std::exp(scores(c, i) - marginals[c]);
        }
    }

    double nll = 0.0;
    if (cfg.nll_weight > 0.0) {
        if (cfg.gamma_mode == GammaMode::hard) {
            std::size_t comp = 0;
            for (std::size_t i = 1; i < k; ++i) {
                if (gamma_row[i] > gamma_row[comp]) comp = i;
            }
            nll = -scores(label, comp);
            upstream(label, comp) -= cfg.nll_weight * inv_count;
        } else {
            for (std::size_t i = 0; i < k; ++i) {
                nll -= gamma_row[i] * scores(label, i);
                upstream(label, i) -= cfg.nll_weight * inv_count * gamma_row[i];
            }
        }
    }

    HlcGrads local(clf);
    hlc_backward(clf, z, upstream, local);
    for (std::size_t j = 0; j < grads.d_mean.size(); ++j) {
        for (std::size_t d = 0; d < clf.dim; ++d) {
            grads.d_mean[j][d] += local.d_mean[j][d];
            grads.d_log_var[j][d] += local.d_log_var[j][d];
        }
    }
    for (std::size_t d = 0; d < clf.dim; ++d) d_feature[d] += local.d_feature[d];

    ce_out = ce;
    nll_out = nll;
    return ce + cfg.nll_weight * nll;
}

// Softmax cross-entropy gradient for a logit vector, scaled by inv_count.
inline Vec64 ce_d_logits(const Vec64& logits, std::size_t label, double lse, double inv_count) {
    Vec64 d(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) {
        d[c] = (std::exp(logits[c] - lse) - (c == label ? 1.0 : 0.0)) * inv_count;
    }
    return d;
}

inline std::size_t argmax_index(const Vec64& v) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < v.size(); ++c) {
        if (v[c] > v[best]) best = c;
    }
    return best;
}

struct GradBundle {
    FeatureGrads net;
    HlcGrads gmm;
    LinearHeadGrads linear;
    MlpHeadGrads mlp;

    explicit GradBundle(const TrainState& state) : net(state.net) {
        if (const auto* g = std::get_if<GmmClassifier>(&state.clf)) gmm = HlcGrads(*g);
        if (const auto* l = std::get_if<LinearHead>(&state.clf)) linear = LinearHeadGrads(*l);
        if (const auto* m = std::get_if<MlpHead>(&state.clf)) mlp = MlpHeadGrads(*m);
    }

    std::vector<std::span<const double>> blocks(const TrainState& state) {
        std::vector<std::span<const double>> out;
        if (!state.net.identity) {
            out.emplace_back(net.d_w1.values);
            out.emplace_back(net.d_b1);
            out.emplace_back(net.d_w2.values);
            out.emplace_back(net.d_b2);
        }
        if (std::holds_alternative<GmmClassifier>(state.clf)) {
            for (std::size_t j = 0; j < gmm.d_mean.size(); ++j) {
                out.emplace_back(gmm.d_mean[j]);
                out.emplace_back(gmm.d_log_var[j]);
            }
        } else if (std::holds_alternative<LinearHead>(state.clf)) {
            out.emplace_back(linear.d_w.values);
            out.emplace_back(linear.d_b);
        } else {
            out.emplace_back(mlp.d_w1.values);
            out.emplace_back(mlp.d_b1);
            out.emplace_back(mlp.d_w2.values);
            out.emplace_back(mlp.d_b2);
        }
        return out;
    }
};

// Loss and exact gradients over a batch with the features passed through the
// extractor unmodified (no exchange step). The posterior plans are taken as
// given and held constant. This is the differentiation surface the
// finite-difference oracle probes.
inline LossStats loss_and_grads(const std::vector<const Sample*>& batch, TrainState& state,
                                const ClassPlans& plans, GradBundle& grads) {
    require(!batch.empty(), "loss_and_grads: empty batch");
    LossStats stats;
    stats.count = batch.size();
    const double inv_count = 1.0 / static_cast<double>(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const Sample& sample = *batch[s];
        auto [z, cache] = feature_forward(state.net, sample.x);
        Vec64 d_feature(z.size(), 0.0);
        std::size_t predicted = 0;
        if (auto* gmm = std::get_if<GmmClassifier>(&state.clf)) {
            const auto& plan = plans.plans.at(sample.class_id);
            double ce = 0.0, nll = 0.0;
            stats.loss += inv_count * gmm_sample_loss_backward(
                                          *gmm, z, sample.class_id,
                                          plan.gamma.row(plans.row_of_sample[s]), state.cfg,
                                          inv_count, grads.gmm, d_feature, ce, nll, predicted);
            stats.ce += inv_count * ce;
            stats.nll += inv_count * nll;
        } else if (auto* lin = std::get_if<LinearHead>(&state.clf)) {
            const Vec64 logits = head_logits(*lin, z);
            const double lse = log_sum_exp(logits);
            const double ce = lse - logits[sample.class_id];
            predicted = argmax_index(logits);
            head_backward(*lin, z, ce_d_logits(logits, sample.class_id, lse, inv_count),
                          grads.linear, d_feature);
            stats.loss += inv_count * ce;
            stats.ce += inv_count * ce;
        } else {
            auto& mlp = std::get<MlpHead>(state.clf);
            auto [logits, hcache] = head_logits(mlp, z);
            const double lse = log_sum_exp(logits);
            const double ce = lse - logits[sample.class_id];
            predicted = argmax_index(logits);
            head_backward(mlp, hcache, ce_d_logits(logits, sample.class_id, lse, inv_count),
                          grads.mlp, d_feature);
            stats.loss += inv_count * ce;
            stats.ce += inv_count * ce;
        }
        stats.correct += (predicted == sample.class_id);
        feature_backward(state.net, cache, d_feature, grads.net);
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct MetricRow {
    std::uint64_t iter = 0;
    std::string split;
    double loss = 0.0;
    double acc = 0.0;
};

struct TrainResult {
    TrainState state;
    std::vector<MetricRow> metrics;
};

struct DivergenceError : NumericError {
    std::uint64_t iter;
    explicit DivergenceError(std::uint64_t it)
        : NumericError("training diverged: non-finite loss at iteration " + std::to_string(it)),
          iter(it) {}
};

inline std::size_t classify(const TrainState& state, const Vec64& x) {
    const Vec64 z = feature_forward(state.net, x).first;
    if (const auto* gmm = std::get_if<GmmClassifier>(&state.clf)) {
        return predict(*gmm, z, state.cfg.predict_mode);
    }
    Vec64 logits = std::holds_alternative<LinearHead>(state.clf)
                       ? head_logits(std::get<LinearHead>(state.clf), z)
                       : head_logits(std::get<MlpHead>(state.clf), z).first;
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c) {
        if (logits[c] > logits[best]) best = c;
    }
    return best;
}

// Mean loss (and accuracy) over a fixed index set with the current
// parameters. The component posterior for the likelihood term is the
// per-sample responsibility argmax, so the value is deterministic and needs
// no batch context.
inline std::pair<double, double> eval_loss_acc(const TrainState& state, const Dataset& ds,
                                               const std::vector<std::size_t>& idx) {
    require(!idx.empty(), "eval_loss_acc: empty index set");
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t s : idx) {
        const Sample& sample = ds.samples[s];
        const Vec64 z = feature_forward(state.net, sample.x).first;
        if (const auto* gmm = std::get_if<GmmClassifier>(&state.clf)) {
            Vec64 marginals(gmm->classes);
            for (std::size_t c = 0; c < gmm->classes; ++c) {
                marginals[c] = class_log_marginal(*gmm, c, z);
            }
            const double ce = log_sum_exp(marginals) - marginals[sample.class_id];
            double nll = 0.0;
            if (state.cfg.nll_weight > 0.0) {
                const auto [score, comp] = class_log_max_component(*gmm, sample.class_id, z);
                nll = -score;
                (void)comp;
            }
            loss += ce + state.cfg.nll_weight * nll;
            correct += (predict(*gmm, z, state.cfg.predict_mode) == sample.class_id);
        } else {
            Vec64 logits = std::holds_alternative<LinearHead>(state.clf)
                               ? head_logits(std::get<LinearHead>(state.clf), z)
                               : head_logits(std::get<MlpHead>(state.clf), z).first;
            loss += log_sum_exp(logits) - logits[sample.class_id];
            std::size_t best = 0;
            for (std::size_t c = 1; c < logits.size(); ++c) {
                if (logits[c] > logits[best]) best = c;
            }
            correct += (best == sample.class_id);
        }
    }
    return {loss / static_cast<double>(idx.size()),
            static_cast<double>(correct) / static_cast<double>(idx.size())};
}

namespace detail {

// Draw batch_per_domain samples (with replacement) from every source
// domain's train fold, concatenated in ascending domain order.
inline std::vector<std::size_t> sample_batch(const SplitPlan& split, std::size_t per_domain,
                                             Rng& rng) {
    std::vector<std::size_t> batch;
    for (std::size_t m = 0; m < split.train_idx.size(); ++m) {
        const auto& fold = split.train_idx[m];
        if (fold.empty()) continue;
        for (std::size_t j = 0; j < per_domain; ++j) {
            batch.push_back(fold[rng.below(fold.size())]);
        }
    }
    return batch;
}

inline void clamp_gmm(Classifier& clf) {
    if (auto* gmm = std::get_if<GmmClassifier>(&clf)) {
        for (auto& comp : gmm->components) comp.clamp_log_var();
    }
}

}  // namespace detail

// Runs iterations [state.iter, until). Records train/val rows every 50
// iterations. Aborts with DivergenceError on a non-finite loss.
inline std::vector<MetricRow> run_iterations(TrainState& state, const Dataset& ds,
                                             const SplitPlan& split, std::uint64_t until) {
    std::vector<MetricRow> metrics;
    std::vector<std::size_t> val_all;
    for (const auto& fold : split.val_idx) val_all.insert(val_all.end(), fold.begin(), fold.end());

    const RunConfig& cfg = state.cfg;
    while (state.iter < until) {
        const auto batch_idx = detail::sample_batch(split, cfg.batch_per_domain, state.rng_batch);
        require(!batch_idx.empty(), "train: no source-domain training samples");

        std::vector<Vec64> feats(batch_idx.size());
        std::vector<ForwardCache> caches(batch_idx.size());
        std::vector<std::size_t> labels(batch_idx.size());
        for (std::size_t s = 0; s < batch_idx.size(); ++s) {
            const Sample& sample = ds.samples[batch_idx[s]];
            auto [z, cache] = feature_forward(state.net, sample.x);
            feats[s] = std::move(z);
            caches[s] = std::move(cache);
            labels[s] = sample.class_id;
        }

        GradBundle grads(state);
        LossStats stats;
        stats.count = batch_idx.size();
        const double inv_count = 1.0 / static_cast<double>(batch_idx.size());

        if (auto* gmm = std::get_if<GmmClassifier>(&state.clf)) {
            // Exchange low-activation dimensions using assignments from the
            // pre-update parameters, then rebuild the posterior on the
            // exchanged features.
            ScbApplication scb_app;
            if (cfg.scb.enabled) {
                std::vector<std::size_t> assignments(feats.size());
                for (std::size_t s = 0; s < feats.size(); ++s) {
                    Vec64 r = responsibilities(*gmm, labels[s], feats[s]);
                    std::size_t best = 0;
                    for (std::size_t i = 1; i < r.size(); ++i) {
                        if (r[i] > r[best]) best = i;
                    }
                    assignments[s] = best;
                }
                scb_app = apply_scb(feats, labels, *gmm, assignments, cfg.scb, state.rng_scb);
            } else {
                scb_app.features = feats;
            }

            const ClassPlans plans = compute_plans(*gmm, scb_app.features, labels, cfg.dcb);

            std::vector<Vec64> d_feats(feats.size(), Vec64(gmm->dim, 0.0));
            for (std::size_t s = 0; s < feats.size(); ++s) {
                double ce = 0.0, nll = 0.0;
                std::size_t predicted = 0;
                const auto& plan = plans.plans.at(labels[s]);
                stats.loss += inv_count * gmm_sample_loss_backward(
                                              *gmm, scb_app.features[s], labels[s],
                                              plan.gamma.row(plans.row_of_sample[s]), cfg,
                                              inv_count, grads.gmm, d_feats[s], ce, nll,
                                              predicted);
                stats.ce += inv_count * ce;
                stats.nll += inv_count * nll;
                stats.correct += (predicted == labels[s]);
            }
            // Route gradients back through the exchange (masks constant) and
            // into the extractor.
            scb_route_grads(d_feats, scb_app);
            for (std::size_t s = 0; s < feats.size(); ++s) {
                feature_backward(state.net, caches[s], d_feats[s], grads.net);
            }
        } else {
            std::vector<const Sample*> batch(batch_idx.size());
            for (std::size_t s = 0; s < batch_idx.size(); ++s) batch[s] = &ds.samples[batch_idx[s]];
            ClassPlans no_plans;
            stats = loss_and_grads(batch, state, no_plans, grads);
        }

        if (!std::isfinite(stats.loss)) throw DivergenceError(state.iter);

        if (state.iter % 50 == 0) {
            metrics.push_back({state.iter, "train", stats.loss,
                               static_cast<double>(stats.correct) /
                                   static_cast<double>(stats.count)});
            if (!val_all.empty()) {
                const auto [vloss, vacc] = eval_loss_acc(state, ds, val_all);
                metrics.push_back({state.iter, "val", vloss, vacc});
            }
        }

        const double lr = lr_at(state.iter, cfg.iterations, cfg.lr);
        auto params = param_blocks(state);
        adam_step(params, grads.blocks(state), state.adam, lr);
        detail::clamp_gmm(state.clf);
        state.net.revision += 1;
        state.iter += 1;
    }
    return metrics;
}

inline TrainResult train(const Dataset& ds, const SplitPlan& split, const RunConfig& cfg) {
    TrainResult result{init_state(cfg, ds), {}};
    result.metrics = run_iterations(result.state, ds, split, cfg.iterations);
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointMagic = "GCDG1";

namespace detail {

inline void write_block(std::ostream& out, const std::string& name,
                        std::span<const double> values) {
    out << "block " << name << " " << values.size() << "\n";
    out << std::hexfloat;
    for (std::size_t j = 0; j < values.size(); ++j) {
        out << values[j] << (j + 1 == values.size() ? "" : " ");
    }
    out << "\n" << std::defaultfloat;
}

inline Vec64 read_block(std::istream& in, const std::string& expect_name) {
    std::string tag, name;
    std::size_t n = 0;
    in >> tag >> name >> n;
    if (tag != "block" || name != expect_name) {
        throw std::runtime_error("checkpoint: expected block '" + expect_name + "', found '" +
                                 tag + " " + name + "'");
    }
    Vec64 values(n);
    for (auto& v : values) {
        std::string tok;
        in >> tok;
        v = std::strtod(tok.c_str(), nullptr);
    }
    if (!in) throw std::runtime_error("checkpoint: truncated block " + expect_name);
    return values;
}

}  // namespace detail

// Textual key-value checkpoint. Doubles are stored as hexfloats, random
// streams as the engine's standard textual state; a reload is bit-identical.
inline void save_checkpoint(TrainState& state, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << kCheckpointMagic << "\n";
    const auto cfg_lines = echo_config(state.cfg);
    out << "config " << cfg_lines.size() << "\n";
    for (const auto& line : cfg_lines) out << line << "\n";
    out << "iter " << state.iter << "\n";
    out << "rng_batch " << state.rng_batch.save_state() << "\n";
    out << "rng_scb " << state.rng_scb.save_state() << "\n";

    out << "net " << (state.net.identity ? "identity" : "mlp") << " " << state.net.in_dim << " "
        << state.net.hidden << " " << state.net.out_dim << " " << state.net.revision << "\n";

    auto blocks = param_blocks(state);
    out << "param_blocks " << blocks.size() << "\n";
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        detail::write_block(out, "p" + std::to_string(b), blocks[b]);
    }
    out << "adam_step " << state.adam.step << "\n";
    for (std::size_t b = 0; b < state.adam.m.size(); ++b) {
        detail::write_block(out, "m" + std::to_string(b), state.adam.m[b]);
        detail::write_block(out, "v" + std::to_string(b), state.adam.v[b]);
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failure on " + path);
}

inline TrainState load_checkpoint(const std::string& path, const Dataset& ds) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string magic;
    std::getline(in, magic);
    if (magic != kCheckpointMagic) {
        throw std::runtime_error("load_checkpoint: bad magic '" + magic + "' in " + path);
    }
    std::string tag;
    std::size_t n_cfg = 0;
    in >> tag >> n_cfg;
    if (tag != "config") throw std::runtime_error("load_checkpoint: missing config section");
    in.ignore();
    RunConfig cfg;
    for (std::size_t j = 0; j < n_cfg; ++j) {
        std::string line;
        std::getline(in, line);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("load_checkpoint: bad config line");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (!value.empty()) config_set(cfg, key, value);
    }

    TrainState state = init_state(cfg, ds);

    in >> tag >> state.iter;
    if (tag != "iter") throw std::runtime_error("load_checkpoint: missing iter");
    auto read_rng = [&](const char* expect, Rng& rng) {
        in >> tag;
        if (tag != expect) throw std::runtime_error("load_checkpoint: missing " + std::string(expect));
        std::string rng_state;
        std::getline(in, rng_state);
        rng.load_state(rng_state);
    };
    read_rng("rng_batch", state.rng_batch);
    read_rng("rng_scb", state.rng_scb);

    std::string net_kind;
    std::size_t in_dim = 0, hidden = 0, out_dim = 0;
    in >> tag >> net_kind >> in_dim >> hidden >> out_dim >> state.net.revision;
    if (tag != "net") throw std::runtime_error("load_checkpoint: missing net header");
    if ((net_kind == "identity") != state.net.identity || in_dim != state.net.in_dim ||
        hidden != state.net.hidden || out_dim != state.net.out_dim) {
        throw std::runtime_error("load_checkpoint: network shape does not match dataset/config");
    }

    std::size_t n_blocks = 0;
    in >> tag >> n_blocks;
    if (tag != "param_blocks") throw std::runtime_error("load_checkpoint: missing param_blocks");
    auto blocks = param_blocks(state);
    if (n_blocks != blocks.size()) {
        throw std::runtime_error("load_checkpoint: parameter block count mismatch");
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        Vec64 values = detail::read_block(in, "p" + std::to_string(b));
        require_same_dim(values.size(), blocks[b].size(), "checkpoint block");
        std::copy(values.begin(), values.end(), blocks[b].begin());
    }
    in >> tag >> state.adam.step;
    if (tag != "adam_step") throw std::runtime_error("load_checkpoint: missing adam_step");
    for (std::size_t b = 0; b < state.adam.m.size(); ++b) {
        state.adam.m[b] = detail::read_block(in, "m" + std::to_string(b));
        state.adam.v[b] = detail::read_block(in, "v" + std::to_string(b));
    }
    return state;
}

}  // namespace gcdg
