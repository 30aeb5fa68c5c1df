#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mta/autodiff.hpp"
#include "mta/errors.hpp"
#include "mta/path.hpp"
#include "mta/rng.hpp"
#include "mta/vocab.hpp"

namespace mta {

// Ground-truth parameters of the synthetic journey distribution. Conversion
// follows logit = base + sum_t beta[x_t] * exp(-decay * lag_t) + gamma . C,
// so the planted credit of every event is known exactly.
struct GeneratorSpec {
    std::size_t n_paths = 5000;
    std::uint64_t seed = 0;
    std::vector<double> beta;        // per-touchpoint effect weight
    double decay = 1.0;              // per-day decay of an event's effect
    double base_logit = 0.0;
    std::vector<double> gamma;       // effect of each control variable
    std::vector<double> tp_mix;      // touchpoint draw weights; empty = uniform
    double mean_length = 4.0;        // geometric path length, mean events per path
    double mean_gap_days = 1.0;      // exponential inter-event gap
    double horizon_days = 56.0;

    void validate(std::size_t vocab_size, std::size_t control_dim) const {
        if (n_paths < 1) throw ConfigError("generator needs n_paths >= 1");
        if (beta.size() != vocab_size)
            throw ConfigError("generator beta must have one weight per touchpoint");
        if (!gamma.empty() && gamma.size() != control_dim)
            throw ConfigError("generator gamma length does not match the control schema");
        if (!tp_mix.empty()) {
            if (tp_mix.size() != vocab_size)
                throw ConfigError("generator tp_mix must have one weight per touchpoint");
            double sum = 0.0;
            for (double w : tp_mix) {
                if (w < 0.0) throw ConfigError("generator tp_mix weights must be nonnegative");
                sum += w;
            }
            if (sum <= 0.0) throw ConfigError("generator tp_mix weights sum to zero");
        }
        if (decay < 0.0) throw ConfigError("generator decay must be nonnegative");
        if (mean_length < 1.0) throw ConfigError("generator mean_length must be at least 1");
        if (mean_gap_days <= 0.0) throw ConfigError("generator mean gap must be positive");
        if (horizon_days <= 0.0) throw ConfigError("generator horizon must be positive");
    }

    nlohmann::ordered_json to_json() const {
        return {{"n_paths", n_paths},         {"seed", seed},
                {"beta", beta},               {"decay", decay},
                {"base_logit", base_logit},   {"gamma", gamma},
                {"tp_mix", tp_mix},           {"mean_length", mean_length},
                {"mean_gap_days", mean_gap_days}, {"horizon_days", horizon_days}};
    }

    static GeneratorSpec from_json(const nlohmann::json& j) {
        GeneratorSpec s;
        s.n_paths = j.at("n_paths").get<std::size_t>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.beta = j.at("beta").get<std::vector<double>>();
        s.decay = j.at("decay").get<double>();
        s.base_logit = j.at("base_logit").get<double>();
        s.gamma = j.at("gamma").get<std::vector<double>>();
        if (j.contains("tp_mix")) s.tp_mix = j.at("tp_mix").get<std::vector<double>>();
        s.mean_length = j.at("mean_length").get<double>();
        s.mean_gap_days = j.at("mean_gap_days").get<double>();
        s.horizon_days = j.at("horizon_days").get<double>();
        return s;
    }
};

// Synthetic control variables: account age plus indicator bumps shortly
// after signup and around trial expiry.
inline std::vector<std::string> generator_control_schema() {
    return {"days_since_signup", "near_signup", "near_expiry"};
}

inline std::vector<double> draw_controls(Rng& rng) {
    const double dss = rng.uniform(0.0, 60.0);
    return {dss, dss <= 7.0 ? 1.0 : 0.0, (dss >= 28.0 && dss <= 35.0) ? 1.0 : 0.0};
}

inline std::vector<TouchpointPath> generate(const GeneratorSpec& spec,
                                            const Vocabulary& vocab = Vocabulary::standard()) {
    spec.validate(vocab.size(), generator_control_schema().size());
    double mix_sum = 0.0;
    for (double w : spec.tp_mix) mix_sum += w;

    std::vector<TouchpointPath> paths;
    paths.reserve(spec.n_paths);
    for (std::size_t i = 0; i < spec.n_paths; ++i) {
        Rng rng(derive_seed(spec.seed, 0x6E50000ULL + i));

        TouchpointPath p;
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "s%06zu", i);
        p.id = idbuf;
        p.end_time = spec.horizon_days;
        p.controls = draw_controls(rng);

        const std::size_t length =
            1 + static_cast<std::size_t>(rng.geometric(1.0 / spec.mean_length));

        // Lags grow backwards from the path end; events past the horizon
        // are dropped, which truncates long journeys.
        std::vector<double> lags;
        double lag = std::min(rng.exponential(spec.mean_gap_days), spec.horizon_days);
        for (std::size_t t = 0; t < length && lag <= spec.horizon_days; ++t) {
            lags.push_back(lag);
            lag += rng.exponential(spec.mean_gap_days);
        }
        std::reverse(lags.begin(), lags.end()); // oldest first

        double logit = spec.base_logit;
        for (double l : lags) {
            std::uint32_t tp;
            if (spec.tp_mix.empty()) {
                tp = static_cast<std::uint32_t>(rng.index(vocab.size()));
            } else {
                double u = rng.uniform() * mix_sum;
                std::size_t k = 0;
                while (k + 1 < spec.tp_mix.size() && u >= spec.tp_mix[k]) u -= spec.tp_mix[k++];
                tp = static_cast<std::uint32_t>(k);
            }
            p.events.push_back(tp);
            p.time_lags.push_back(l);
            p.occurrence_times.push_back(spec.horizon_days - l);
            logit += spec.beta[tp] * std::exp(-spec.decay * l);
        }
        for (std::size_t c = 0; c < spec.gamma.size(); ++c)
            logit += spec.gamma[c] * p.controls[c];

        p.converted = rng.bernoulli(ad::detail::sigmoid(logit));
        p.validate(vocab.size());
        paths.push_back(std::move(p));
    }
    return paths;
}

// Exact analog of fractional scoring under the true process: each event's
// credit is its planted logit contribution, normalized per converting path.
inline std::map<std::string, double>
ground_truth_fractional(const GeneratorSpec& spec, const std::vector<TouchpointPath>& paths,
                        const Vocabulary& vocab = Vocabulary::standard()) {
    std::map<std::string, double> acc;
    for (const auto& ch : vocab.channels()) acc[ch] = 0.0;
    std::size_t counted = 0;
    for (const auto& p : paths) {
        if (!p.converted) continue;
        std::vector<double> credit(vocab.channels().size(), 0.0);
        double total = 0.0;
        for (std::size_t t = 0; t < p.events.size(); ++t) {
            const double w =
                std::max(0.0, spec.beta[p.events[t]] * std::exp(-spec.decay * p.time_lags[t]));
            credit[vocab.channel_index(p.events[t])] += w;
            total += w;
        }
        if (total <= 0.0) continue;
        for (std::size_t c = 0; c < credit.size(); ++c)
            acc[vocab.channels()[c]] += credit[c] / total;
        ++counted;
    }
    if (counted == 0) throw std::domain_error("ground truth needs a converting path with credit");
    for (auto& [ch, v] : acc) v /= double(counted);
    return acc;
}

} // namespace mta
