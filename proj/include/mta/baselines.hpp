#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mta/path.hpp"
#include "mta/serialize.hpp"
#include "mta/train.hpp"
#include "mta/vocab.hpp"

namespace mta {

// Last-touch baseline: Laplace-smoothed conversion rate of the final
// touchpoint, blind to everything before it.
struct LtaModel {
    std::vector<double> rates; // per touchpoint index
    Vocabulary vocab;

    static LtaModel fit(const std::vector<TouchpointPath>& paths, const Vocabulary& vocab) {
        if (paths.empty()) throw std::domain_error("lta fit: empty training set");
        std::vector<std::size_t> conv(vocab.size(), 0), total(vocab.size(), 0);
        for (const auto& p : paths) {
            p.validate(vocab.size());
            const std::uint32_t last = p.events.back();
            ++total[last];
            conv[last] += p.converted ? 1 : 0;
        }
        LtaModel m;
        m.vocab = vocab;
        m.rates.resize(vocab.size());
        for (std::size_t i = 0; i < vocab.size(); ++i)
            m.rates[i] = (double(conv[i]) + 1.0) / (double(total[i]) + 2.0);
        return m;
    }

    double predict(const TouchpointPath& path) const {
        if (path.events.empty()) return 0.5; // no exposure: the smoothed prior
        const std::uint32_t last = path.events.back();
        if (last >= rates.size())
            throw DataError("lta predict: event index " + std::to_string(last) +
                            " outside vocabulary");
        return rates[last];
    }
};

inline void save_lta(const std::string& file, const LtaModel& m) {
    ordered_json j = model_envelope("lta");
    j["vocab"] = m.vocab.to_json();
    j["rates"] = m.rates;
    write_json_file(file, j);
}

inline LtaModel load_lta_json(const ordered_json& j, const std::string& file) {
    check_envelope(j, file);
    if (j.at("variant").get<std::string>() != "lta")
        throw ModelIoError("'" + file + "' is not an lta model");
    LtaModel m;
    if (!j.contains("vocab")) throw ModelIoError("'" + file + "' is missing vocab");
    m.vocab = Vocabulary::from_json(j.at("vocab"));
    try {
        m.rates = j.at("rates").get<std::vector<double>>();
    } catch (const ordered_json::exception& e) {
        throw ModelIoError(std::string("bad rates field: ") + e.what());
    }
    if (m.rates.size() != m.vocab.size())
        throw ModelIoError("rates length " + std::to_string(m.rates.size()) +
                           " disagrees with vocab size " + std::to_string(m.vocab.size()));
    return m;
}

inline LtaModel load_lta(const std::string& file) {
    return load_lta_json(read_json_file(file), file);
}

struct LrFeatureSpec {
    std::size_t horizon_days = 57;
    std::size_t vocab_size = 6;
    bool binary = false; // default: counts per (touchpoint, day-lag) bucket

    std::size_t dim() const { return horizon_days * vocab_size; }

    void validate() const {
        if (horizon_days < 1 || vocab_size < 1)
            throw ConfigError("lr feature spec needs horizon and vocab >= 1");
    }
};

// feature index = touchpoint * H + min(floor(lag_days), H - 1)
inline Tensor lr_featurize(const TouchpointPath& path, const LrFeatureSpec& spec) {
    spec.validate();
    Tensor f({spec.dim()});
    for (std::size_t t = 0; t < path.events.size(); ++t) {
        const std::uint32_t tp = path.events[t];
        if (tp >= spec.vocab_size)
            throw DataError("lr featurize: event index " + std::to_string(tp) +
                            " outside vocabulary");
        const double lag = path.time_lags[t];
        std::size_t bucket = lag < 0.0 ? 0 : static_cast<std::size_t>(std::floor(lag));
        bucket = std::min(bucket, spec.horizon_days - 1);
        const std::size_t idx = tp * spec.horizon_days + bucket;
        if (spec.binary)
            f[idx] = 1.0;
        else
            f[idx] += 1.0;
    }
    return f;
}

struct LrModel {
    LrFeatureSpec spec;
    Vocabulary vocab;
    Tensor w; // [dim]
    Tensor b; // [1]

    double predict_features(const Tensor& f) const {
        double z = b[0];
        for (std::size_t i = 0; i < f.numel(); ++i) z += w[i] * f[i];
        return ad::detail::sigmoid(z);
    }

    double predict(const TouchpointPath& path) const {
        if (path.events.empty()) return ad::detail::sigmoid(b[0]);
        return predict_features(lr_featurize(path, spec));
    }
};

struct LrTrainConfig {
    double learning_rate = 0.01;
    double l2 = 1e-4; // applied to weights, not the intercept
    std::size_t batch_size = 32;
    std::size_t max_epochs = 60;
    std::size_t patience = 5;
    Monitor monitor = Monitor::valid_loss;
    std::uint64_t seed = 0;
};

// L2-regularized logistic regression trained with the same Adam loop and
// early-stopping policy as the sequence models. Zero init: the objective is
// convex, so only the shuffle needs the seed.
inline LrModel lr_train(const std::vector<TouchpointPath>& train,
                        const std::vector<TouchpointPath>& validation, const Vocabulary& vocab,
                        const LrFeatureSpec& spec, const LrTrainConfig& cfg) {
    spec.validate();
    if (train.empty() || validation.empty())
        throw std::domain_error("lr train requires nonempty train and validation sets");
    if (cfg.learning_rate <= 0.0 || cfg.l2 < 0.0)
        throw ConfigError("lr train: rate must be positive and l2 nonnegative");

    std::vector<const TouchpointPath*> ordered;
    ordered.reserve(train.size());
    for (const auto& p : train) ordered.push_back(&p);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const TouchpointPath* a, const TouchpointPath* b) { return a->id < b->id; });

    std::vector<Tensor> feats;
    std::vector<double> labels;
    feats.reserve(ordered.size());
    for (const TouchpointPath* p : ordered) {
        feats.push_back(lr_featurize(*p, spec));
        labels.push_back(p->converted ? 1.0 : 0.0);
    }
    std::vector<Tensor> vfeats;
    std::vector<double> vlabels;
    std::vector<int> vlabels_int;
    for (const auto& p : validation) {
        vfeats.push_back(lr_featurize(p, spec));
        vlabels.push_back(p.converted ? 1.0 : 0.0);
        vlabels_int.push_back(p.converted ? 1 : 0);
    }
    const bool v_both = std::find(vlabels_int.begin(), vlabels_int.end(), 0) !=
                            vlabels_int.end() &&
                        std::find(vlabels_int.begin(), vlabels_int.end(), 1) != vlabels_int.end();

    LrModel model;
    model.spec = spec;
    model.vocab = vocab;
    model.w = Tensor({spec.dim()});
    model.b = Tensor({1});

    TrainConfig acfg;
    acfg.learning_rate = cfg.learning_rate;
    acfg.batch_size = cfg.batch_size;
    acfg.max_epochs = cfg.max_epochs;
    acfg.patience = cfg.patience;
    acfg.seed = cfg.seed;

    std::vector<Tensor*> params = {&model.w, &model.b};
    AdamState adam(params);
    Tensor gw({spec.dim()}), gb({1});

    Tensor best_w = model.w, best_b = model.b;
    double best_valid = std::numeric_limits<double>::infinity();
    double best_auc = -std::numeric_limits<double>::infinity();
    std::size_t bad = 0;

    std::vector<std::size_t> order(feats.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng erng(derive_seed(cfg.seed, 0x19E0 + epoch));
        erng.shuffle(order);
        std::size_t done = 0;
        while (done < order.size()) {
            const std::size_t bsz = std::min(cfg.batch_size, order.size() - done);
            gw.fill(0.0);
            gb.fill(0.0);
            for (std::size_t k = 0; k < bsz; ++k) {
                const Tensor& f = feats[order[done + k]];
                const double err = model.predict_features(f) - labels[order[done + k]];
                gw.add_scaled(f, err);
                gb[0] += err;
            }
            gw.scale(1.0 / double(bsz));
            gb.scale(1.0 / double(bsz));
            gw.add_scaled(model.w, cfg.l2);
            adam_step(params, {gw, gb}, adam, acfg);
            done += bsz;
        }

        double vloss = 0.0;
        std::vector<double> vprobs(vfeats.size());
        for (std::size_t i = 0; i < vfeats.size(); ++i) {
            vprobs[i] = model.predict_features(vfeats[i]);
            vloss += bce_loss(vprobs[i], vlabels[i]);
        }
        vloss /= double(vfeats.size());
        if (!std::isfinite(vloss))
            throw DivergenceError("lr training diverged at epoch " + std::to_string(epoch));
        const double vauc = v_both ? auc(vprobs, vlabels_int) : 0.5;

        const bool improved = cfg.monitor == Monitor::valid_auc ? vauc > best_auc + 1e-12
                                                                : vloss < best_valid - 1e-12;
        if (improved) {
            best_valid = vloss;
            best_auc = vauc;
            best_w = model.w;
            best_b = model.b;
            bad = 0;
        } else if (++bad >= cfg.patience) {
            break;
        }
    }
    model.w = std::move(best_w);
    model.b = std::move(best_b);
    return model;
}

inline void save_lr(const std::string& file, const LrModel& m) {
    ordered_json j = model_envelope("lr");
    ordered_json spec;
    spec["horizon_days"] = m.spec.horizon_days;
    spec["vocab_size"] = m.spec.vocab_size;
    spec["binary"] = m.spec.binary;
    j["spec"] = std::move(spec);
    j["vocab"] = m.vocab.to_json();
    j["tensors"]["w"] = tensor_to_json(m.w);
    j["tensors"]["b"] = tensor_to_json(m.b);
    write_json_file(file, j);
}

inline LrModel load_lr_json(const ordered_json& j, const std::string& file) {
    check_envelope(j, file);
    if (j.at("variant").get<std::string>() != "lr")
        throw ModelIoError("'" + file + "' is not an lr model");
    LrModel m;
    try {
        const ordered_json& spec = j.at("spec");
        m.spec.horizon_days = spec.at("horizon_days").get<std::size_t>();
        m.spec.vocab_size = spec.at("vocab_size").get<std::size_t>();
        m.spec.binary = spec.at("binary").get<bool>();
    } catch (const ordered_json::exception& e) {
        throw ModelIoError(std::string("bad lr spec: ") + e.what());
    }
    m.spec.validate();
    if (!j.contains("vocab")) throw ModelIoError("'" + file + "' is missing vocab");
    m.vocab = Vocabulary::from_json(j.at("vocab"));
    if (m.vocab.size() != m.spec.vocab_size)
        throw ModelIoError("vocab size disagrees with lr spec");
    if (!j.contains("tensors")) throw ModelIoError("'" + file + "' is missing tensors");
    m.w = tensor_from_json(j.at("tensors").at("w"), "w");
    m.b = tensor_from_json(j.at("tensors").at("b"), "b");
    if (m.w.numel() != m.spec.dim())
        throw ModelIoError("tensor 'w' shape mismatch: expected [" +
                           std::to_string(m.spec.dim()) + "], got " + m.w.shape_string());
    if (m.b.numel() != 1) throw ModelIoError("tensor 'b' must be a scalar");
    return m;
}

inline LrModel load_lr(const std::string& file) {
    return load_lr_json(read_json_file(file), file);
}

} // namespace mta
