#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mta/dataset.hpp"
#include "mta/model.hpp"

namespace mta {

inline double bce_loss(double p, double label) {
    const double pc = std::clamp(p, ad::detail::kBceClamp, 1.0 - ad::detail::kBceClamp);
    return -(label * std::log(pc) + (1.0 - label) * std::log(1.0 - pc));
}

// Early stopping can track validation loss (default) or validation AUC;
// pick the one the downstream comparison is scored on.
enum class Monitor { valid_loss, valid_auc };

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0; // global gradient norm cap, 0 disables
    std::size_t batch_size = 32;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    Monitor monitor = Monitor::valid_loss;
    std::uint64_t seed = 0;

    void validate() const {
        if (learning_rate <= 0.0 || beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 ||
            beta2 >= 1.0 || eps <= 0.0)
            throw ConfigError("adam rates must be positive (betas in (0,1))");
        if (clip_norm < 0.0) throw ConfigError("clip norm must be >= 0");
        if (batch_size < 1 || max_epochs < 1) throw ConfigError("batch size and epochs must be >= 1");
        if (patience < 1) throw ConfigError("patience must be >= 1");
    }
};

inline void clip_gradients(std::vector<Tensor>& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (double v : g.data()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (Tensor& g : grads) g.scale(scale);
    }
}

struct AdamState {
    std::vector<Tensor> m, v;
    std::size_t step = 0;

    explicit AdamState(const std::vector<Tensor*>& params) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (const Tensor* t : params) {
            m.emplace_back(t->shape());
            v.emplace_back(t->shape());
        }
    }
};

inline void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                      AdamState& state, const TrainConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw DimensionError("adam_step: parameter/gradient/state count mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// Mann-Whitney AUC with ties counted one half. Accumulates in integer halves
// so the result is exactly the O(n^2) pairwise statistic.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DimensionError("auc: scores/labels length mismatch");
    std::size_t pos = 0, neg = 0;
    for (int y : labels) (y ? pos : neg) += 1;
    if (pos == 0 || neg == 0) throw std::domain_error("auc needs both classes present");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    unsigned long long halves = 0, negs_below = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        unsigned long long p_g = 0, n_g = 0;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            (labels[idx[j]] ? p_g : n_g) += 1;
            ++j;
        }
        halves += 2ULL * p_g * negs_below + p_g * n_g;
        negs_below += n_g;
        i = j;
    }
    return double(halves) / (2.0 * double(pos) * double(neg));
}

struct EvalResult {
    double accuracy = 0.0;
    double auc_value = 0.0;
    double logloss = 0.0;
    std::size_t n = 0;
    std::vector<double> probabilities;
};

// AUC falls back to 0.5 (chance) when only one class is present; a
// single-class set carries no ranking information.
template <typename Predict>
EvalResult evaluate_with(Predict&& predict, const std::vector<TouchpointPath>& paths) {
    if (paths.empty()) throw std::domain_error("evaluate: empty path set");
    EvalResult r;
    r.n = paths.size();
    r.probabilities.reserve(paths.size());
    std::vector<int> labels;
    labels.reserve(paths.size());
    std::size_t correct = 0;
    for (const auto& path : paths) {
        const double p = predict(path);
        const int y = path.converted ? 1 : 0;
        r.probabilities.push_back(p);
        labels.push_back(y);
        r.logloss += bce_loss(p, double(y));
        correct += (p > 0.5 ? 1 : 0) == y;
    }
    r.logloss /= double(paths.size());
    r.accuracy = double(correct) / double(paths.size());
    const bool both = std::find(labels.begin(), labels.end(), 0) != labels.end() &&
                      std::find(labels.begin(), labels.end(), 1) != labels.end();
    r.auc_value = both ? auc(r.probabilities, labels) : 0.5;
    return r;
}

inline EvalResult evaluate(const ModelParameters& params, const ModelConfig& cfg,
                           const std::vector<TouchpointPath>& paths) {
    return evaluate_with(
        [&](const TouchpointPath& p) { return forward(params, cfg, p).probability; }, paths);
}

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    double valid_auc = 0.0;
    double elapsed_seconds = 0.0;
    bool head_restart = false;
};

struct TrainResult {
    ModelParameters params;
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double best_valid_loss = 0.0;
    bool early_stopped = false;
};

// Seeded-shuffle minibatch training with per-path graphs, mean-reduced
// gradients, and patience-based early stopping that restores the best
// validation checkpoint. Input order never matters: paths are canonically
// sorted by id before the seeded shuffle.
inline TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                         const DatasetSplit& split,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
    mcfg.validate();
    tcfg.validate();
    if (split.train.empty() || split.validation.empty())
        throw std::domain_error("train requires nonempty train and validation sets");

    std::vector<TouchpointPath> train_paths = split.train;
    std::stable_sort(train_paths.begin(), train_paths.end(),
                     [](const TouchpointPath& a, const TouchpointPath& b) { return a.id < b.id; });

    ModelParameters params = ModelParameters::init(mcfg, tcfg.seed);

    // A learned decay has to start at the scale of the data: the offsets
    // lambda*lag only steer attention once they reach order one, and lag
    // units vary wildly between datasets (hours vs weeks). One over the
    // mean lag puts the initial tilt inside the observed range; Adam tunes
    // it from there instead of having to climb out of a flat region.
    if (mcfg.needs_decay() && mcfg.decay_mode == DecayMode::learned) {
        double lag_sum = 0.0;
        std::size_t lag_n = 0;
        for (const TouchpointPath& path : train_paths) {
            for (double l : path.time_lags) lag_sum += l;
            lag_n += path.time_lags.size();
        }
        const double mean_lag = lag_n ? lag_sum / double(lag_n) : 0.0;
        if (mean_lag > 1e-9) params.decay_raw[0] = softplus_inverse(1.0 / mean_lag);
    }

    if (mcfg.uses_controls()) {
        // z-score the controls on train statistics so a wide-range covariate
        // cannot drown the indicators (or the sequence branch) at init
        for (std::size_t d = 0; d < mcfg.control_dim; ++d) {
            double sum = 0.0, sq = 0.0;
            for (const TouchpointPath& path : train_paths) {
                if (path.controls.size() != mcfg.control_dim)
                    throw DimensionError("control dimension mismatch: path '" + path.id +
                                         "' has " + std::to_string(path.controls.size()) +
                                         ", model expects " + std::to_string(mcfg.control_dim));
                sum += path.controls[d];
                sq += path.controls[d] * path.controls[d];
            }
            const double mean = sum / double(train_paths.size());
            const double var = std::max(sq / double(train_paths.size()) - mean * mean, 0.0);
            params.control_mean[d] = mean;
            params.control_std[d] = var > 1e-12 ? std::sqrt(var) : 1.0;
        }
    }

    // The classifier head relu(w.s) has an absorbing all-dead state: once
    // w.s < 0 for every path, only b_c receives gradient forever. Uniform
    // init is sign-symmetric, so flipping w samples the same distribution;
    // start with the orientation that keeps the head alive for the majority.
    {
        std::size_t alive = 0;
        for (const TouchpointPath& path : train_paths) {
            const auto out = forward(params, mcfg, path);
            double a = 0.0;
            for (std::size_t i = 0; i < out.path_vector.size(); ++i)
                a += params.cls_w[i] * out.path_vector[i];
            alive += a > 0.0;
        }
        if (alive * 2 < train_paths.size()) params.cls_w.scale(-1.0);
    }

    // Both nonnegative branches (relu head, control net) shift the mean logit
    // above the base rate, and the resulting one-sided pressure on w.s is
    // what walks the head into its dead zone. Start the bias at the prior
    // minus the mean initial branch output so the net pressure is zero.
    {
        std::size_t pos = 0;
        double branch_mean = 0.0;
        const double b0 = params.cls_b[0];
        for (const TouchpointPath& path : train_paths) {
            pos += path.converted ? 1 : 0;
            const auto out = forward(params, mcfg, path);
            const double p = std::clamp(out.probability, 1e-12, 1.0 - 1e-12);
            branch_mean += std::log(p / (1.0 - p)) - b0;
        }
        branch_mean /= double(train_paths.size());
        const double rate =
            std::clamp(double(pos) / double(train_paths.size()), 0.01, 0.99);
        params.cls_b[0] = std::log(rate / (1.0 - rate)) - branch_mean;
    }

    std::vector<Tensor*> tensors;
    std::size_t cls_w_index = 0;
    params.visit(mcfg, [&](const std::string& name, Tensor& t) {
        if (name == "cls.w") cls_w_index = tensors.size();
        tensors.push_back(&t);
    });
    AdamState adam(tensors);
    std::vector<Tensor> grad_accum;
    grad_accum.reserve(tensors.size());
    for (const Tensor* t : tensors) grad_accum.emplace_back(t->shape());

    TrainResult result;
    result.params = params;
    double best_valid = std::numeric_limits<double>::infinity();
    double best_auc = -std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0;
    int head_restarts = 0;

    std::vector<std::size_t> order(train_paths.size());
    std::iota(order.begin(), order.end(), 0);
    ad::Tape tape;

    for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng erng(derive_seed(tcfg.seed, 0xE90C + epoch));
        erng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t done = 0;
        while (done < order.size()) {
            const std::size_t bsz = std::min(tcfg.batch_size, order.size() - done);
            for (Tensor& g : grad_accum) g.fill(0.0);
            for (std::size_t k = 0; k < bsz; ++k) {
                const TouchpointPath& path = train_paths[order[done + k]];
                tape.clear();
                GraphLeaves leaves = make_leaves(tape, params, mcfg);
                PathGraph graph = build_forward(tape, leaves, mcfg, path);
                ad::Value loss = tape.bce(graph.probability, path.converted ? 1.0 : 0.0);
                loss_sum += tape.val(loss)[0];
                tape.backward(loss);
                for (std::size_t i = 0; i < tensors.size(); ++i)
                    grad_accum[i].add_scaled(tape.grad(leaves.trainable[i]), 1.0);
            }
            for (Tensor& g : grad_accum) g.scale(1.0 / double(bsz));
            clip_gradients(grad_accum, tcfg.clip_norm);
            adam_step(tensors, grad_accum, adam, tcfg);
            done += bsz;
        }

        EpochLog el;
        el.epoch = epoch;
        el.train_loss = loss_sum / double(train_paths.size());

        double vloss = 0.0;
        std::vector<double> vprobs;
        std::vector<int> vlabels;
        vprobs.reserve(split.validation.size());
        for (const auto& path : split.validation) {
            const double p = forward(params, mcfg, path).probability;
            vprobs.push_back(p);
            vlabels.push_back(path.converted ? 1 : 0);
            vloss += bce_loss(p, path.converted ? 1.0 : 0.0);
        }
        el.valid_loss = vloss / double(split.validation.size());
        const bool both = std::find(vlabels.begin(), vlabels.end(), 0) != vlabels.end() &&
                          std::find(vlabels.begin(), vlabels.end(), 1) != vlabels.end();
        el.valid_auc = both ? auc(vprobs, vlabels) : 0.5;

        if (!std::isfinite(el.train_loss) || !std::isfinite(el.valid_loss))
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                  " (train loss " + std::to_string(el.train_loss) +
                                  ", valid loss " + std::to_string(el.valid_loss) + ")");
        // saturating activations can keep the loss finite while the weights
        // overflow, so divergence also means any parameter going non-finite
        if (!params.all_finite(mcfg))
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                  " (non-finite parameters)");

        // A head gone all-dead (w.s <= 0 on every training path) never
        // recovers on its own: relu blocks all gradient into the sequence
        // branch. Negating w restores positive preactivations at the same
        // scale; fresh moments keep Adam from re-applying the stale ones.
        if (head_restarts < 3) {
            bool any_alive = false;
            for (const TouchpointPath& path : train_paths) {
                const auto out = forward(params, mcfg, path);
                double a = 0.0;
                for (std::size_t i = 0; i < out.path_vector.size(); ++i)
                    a += params.cls_w[i] * out.path_vector[i];
                if (a > 0.0) {
                    any_alive = true;
                    break;
                }
            }
            if (!any_alive) {
                params.cls_w.scale(-1.0);
                adam.m[cls_w_index].fill(0.0);
                adam.v[cls_w_index].fill(0.0);
                ++head_restarts;
                el.head_restart = true;
            }
        }

        el.elapsed_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(el);
        if (on_epoch) on_epoch(el);

        const bool improved = tcfg.monitor == Monitor::valid_auc
                                  ? el.valid_auc > best_auc + 1e-12
                                  : el.valid_loss < best_valid - 1e-12;
        if (improved) {
            best_valid = el.valid_loss; // metrics of the kept checkpoint
            best_auc = el.valid_auc;
            result.params = params;
            result.best_epoch = epoch;
            bad_epochs = 0;
        } else if (el.head_restart) {
            bad_epochs = 0;
        } else if (++bad_epochs >= tcfg.patience) {
            result.early_stopped = true;
            break;
        }
    }
    result.best_valid_loss = best_valid;
    return result;
}

} // namespace mta
