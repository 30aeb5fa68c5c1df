#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mta/baselines.hpp"
#include "mta/model.hpp"
#include "mta/vocab.hpp"

namespace mta {

// Minimal scoring interface attribution needs: a conversion probability for
// a path, and the model's no-exposure baseline given the same controls.
struct Predictor {
    std::function<double(const TouchpointPath&)> prob;
    std::function<double(const TouchpointPath&)> empty_prob;
};

inline Predictor make_predictor(TrainedModel m) {
    auto held = std::make_shared<TrainedModel>(std::move(m));
    return {[held](const TouchpointPath& p) {
                return forward(held->params, held->config, p).probability;
            },
            [held](const TouchpointPath& p) {
                return empty_path_probability(held->params, held->config, p.controls);
            }};
}

inline Predictor make_predictor(LtaModel m) {
    auto held = std::make_shared<LtaModel>(std::move(m));
    return {[held](const TouchpointPath& p) { return held->predict(p); },
            [](const TouchpointPath&) { return 0.5; }};
}

inline Predictor make_predictor(LrModel m) {
    auto held = std::make_shared<LrModel>(std::move(m));
    return {[held](const TouchpointPath& p) { return held->predict(p); },
            [held](const TouchpointPath&) { return ad::detail::sigmoid(held->b[0]); }};
}

inline bool channel_in_path(const TouchpointPath& path, std::size_t channel_idx,
                            const Vocabulary& vocab) {
    for (std::uint32_t ev : path.events)
        if (vocab.channel_index(ev) == channel_idx) return true;
    return false;
}

inline TouchpointPath remove_channel(const TouchpointPath& path, std::size_t channel_idx,
                                     const Vocabulary& vocab) {
    TouchpointPath out;
    out.id = path.id;
    out.end_time = path.end_time;
    out.controls = path.controls;
    out.converted = path.converted;
    for (std::size_t t = 0; t < path.events.size(); ++t) {
        if (vocab.channel_index(path.events[t]) == channel_idx) continue;
        out.events.push_back(path.events[t]);
        out.time_lags.push_back(path.time_lags[t]);
        out.occurrence_times.push_back(path.occurrence_times[t]);
    }
    return out;
}

// p(path) - p(path without the channel); exact zero when the channel is
// absent, and the no-exposure baseline when removal empties the path.
inline double incremental_score(const Predictor& model, const TouchpointPath& path,
                                const std::string& channel, const Vocabulary& vocab) {
    std::size_t cidx = vocab.channels().size();
    for (std::size_t i = 0; i < vocab.channels().size(); ++i)
        if (vocab.channels()[i] == channel) cidx = i;
    if (cidx == vocab.channels().size())
        throw DataError("unknown channel '" + channel + "'");
    if (!channel_in_path(path, cidx, vocab)) return 0.0;
    const TouchpointPath without = remove_channel(path, cidx, vocab);
    const double base = without.events.empty() ? model.empty_prob(path) : model.prob(without);
    return model.prob(path) - base;
}

using ChannelScores = std::vector<std::pair<std::string, double>>;

// Per-channel mean incremental score over converting paths (absent channels
// contribute zero), plus the total across channels.
inline std::pair<ChannelScores, double>
incremental_report(const Predictor& model, const std::vector<TouchpointPath>& paths,
                   const Vocabulary& vocab) {
    const auto& channels = vocab.channels();
    std::vector<double> sums(channels.size(), 0.0);
    std::size_t n_conv = 0;
    for (const auto& path : paths) {
        if (!path.converted) continue;
        ++n_conv;
        for (std::size_t c = 0; c < channels.size(); ++c)
            sums[c] += incremental_score(model, path, channels[c], vocab);
    }
    if (n_conv == 0) throw std::domain_error("incremental report needs a converting path");
    ChannelScores scores;
    double total = 0.0;
    for (std::size_t c = 0; c < channels.size(); ++c) {
        const double mean = sums[c] / double(n_conv);
        scores.emplace_back(channels[c], mean);
        total += mean;
    }
    return {scores, total};
}

// Per converting path: clip negative incrementals to zero, normalize to a
// simplex, then average the simplexes. Paths whose clipped scores are all
// zero carry no signal and are skipped.
inline ChannelScores fractional_scores(const Predictor& model,
                                       const std::vector<TouchpointPath>& paths,
                                       const Vocabulary& vocab) {
    const auto& channels = vocab.channels();
    std::vector<double> acc(channels.size(), 0.0);
    std::size_t counted = 0;
    bool saw_converting = false;
    for (const auto& path : paths) {
        if (!path.converted) continue;
        saw_converting = true;
        std::vector<double> inc(channels.size(), 0.0);
        double sum = 0.0;
        for (std::size_t c = 0; c < channels.size(); ++c) {
            const double v = incremental_score(model, path, channels[c], vocab);
            inc[c] = v > 0.0 ? v : 0.0;
            sum += inc[c];
        }
        if (sum <= 0.0) continue;
        for (std::size_t c = 0; c < channels.size(); ++c) acc[c] += inc[c] / sum;
        ++counted;
    }
    if (!saw_converting) throw std::domain_error("fractional scores need a converting path");
    if (counted == 0)
        throw std::domain_error("fractional scores: every converting path had zero clipped credit");
    ChannelScores out;
    for (std::size_t c = 0; c < channels.size(); ++c)
        out.emplace_back(channels[c], acc[c] / double(counted));
    return out;
}

// Mean per-channel attention mass over converting paths. The per-path vector
// is already a simplex, so the average is one too.
inline ChannelScores attention_scores(const TrainedModel& m,
                                      const std::vector<TouchpointPath>& paths) {
    if (!m.config.has_attention())
        throw ConfigError("attention scores are not defined for the lstm variant");
    const auto& channels = m.vocab.channels();
    std::vector<double> acc(channels.size(), 0.0);
    std::size_t counted = 0;
    for (const auto& path : paths) {
        if (!path.converted) continue;
        const ForwardOutput out = forward(m.params, m.config, path);
        for (std::size_t t = 0; t < path.events.size(); ++t)
            acc[m.vocab.channel_index(path.events[t])] += out.attention_weights[t];
        ++counted;
    }
    if (counted == 0) throw std::domain_error("attention scores need a converting path");
    ChannelScores out;
    for (std::size_t c = 0; c < channels.size(); ++c)
        out.emplace_back(channels[c], acc[c] / double(counted));
    return out;
}

struct Heatmap {
    std::vector<double> weights;
    double probability = 0.0;
};

inline Heatmap heatmap_weights(const TrainedModel& m, const TouchpointPath& path) {
    const ForwardOutput out = forward(m.params, m.config, path);
    return {out.attention_weights, out.probability};
}

struct LagCurvePoint {
    std::string touchpoint;
    std::size_t bucket = 0;
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

// Groups (event, attention weight) pairs by touchpoint and integer lag
// bucket. Population standard deviation; empty buckets never appear.
inline std::vector<LagCurvePoint> lag_curves(const TrainedModel& m,
                                             const std::vector<TouchpointPath>& paths,
                                             std::size_t bucket_days = 1) {
    if (bucket_days < 1) throw std::domain_error("bucket size must be at least one day");
    struct Acc {
        double sum = 0.0, sumsq = 0.0;
        std::size_t n = 0;
    };
    std::vector<std::map<std::size_t, Acc>> by_tp(m.vocab.size());
    for (const auto& path : paths) {
        const ForwardOutput out = forward(m.params, m.config, path);
        for (std::size_t t = 0; t < path.events.size(); ++t) {
            const std::size_t bucket =
                static_cast<std::size_t>(std::floor(path.time_lags[t] / double(bucket_days)));
            Acc& a = by_tp[path.events[t]][bucket];
            a.sum += out.attention_weights[t];
            a.sumsq += out.attention_weights[t] * out.attention_weights[t];
            ++a.n;
        }
    }
    std::vector<LagCurvePoint> points;
    for (std::size_t tp = 0; tp < by_tp.size(); ++tp) {
        for (const auto& [bucket, a] : by_tp[tp]) {
            LagCurvePoint p;
            p.touchpoint = m.vocab.name(tp);
            p.bucket = bucket;
            p.mean = a.sum / double(a.n);
            p.stddev = std::sqrt(std::max(0.0, a.sumsq / double(a.n) - p.mean * p.mean));
            p.n = a.n;
            points.push_back(std::move(p));
        }
    }
    return points;
}

struct ExposureWindow {
    double lo = 0.0;
    double hi = 0.0;
    std::string label;
};

inline std::vector<ExposureWindow> default_windows() {
    return {{0.0, 7.0, "0-7"}, {7.0, 30.0, "7-30"}, {30.0, 56.0, "30-56"}, {0.0, 56.0, "0-56"}};
}

struct DensitySample {
    std::string window;
    std::string channel;
    double score = 0.0;
};

// Partitions converting paths by journey duration (first-event lag) and
// emits per-path per-channel attention mass for density plotting.
inline std::vector<DensitySample>
exposure_window_densities(const TrainedModel& m, const std::vector<TouchpointPath>& paths,
                          const std::vector<ExposureWindow>& windows = default_windows()) {
    for (const auto& w : windows)
        if (!(w.lo < w.hi)) throw std::domain_error("exposure window '" + w.label +
                                                    "' is not a valid interval");
    const auto& channels = m.vocab.channels();
    std::vector<DensitySample> samples;
    for (const auto& w : windows) {
        for (const auto& path : paths) {
            if (!path.converted) continue;
            const double duration = path.time_lags.empty() ? 0.0 : path.time_lags.front();
            if (!(duration >= w.lo && duration < w.hi)) continue;
            const ForwardOutput out = forward(m.params, m.config, path);
            std::vector<double> mass(channels.size(), 0.0);
            for (std::size_t t = 0; t < path.events.size(); ++t)
                mass[m.vocab.channel_index(path.events[t])] += out.attention_weights[t];
            for (std::size_t c = 0; c < channels.size(); ++c)
                samples.push_back({w.label, channels[c], mass[c]});
        }
    }
    return samples;
}

// ---- CSV emission (UTF-8, header row, six-decimal fixed format) -----------

inline std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline void write_fractional_csv(std::ostream& os, const ChannelScores& scores) {
    os << "channel,score\n";
    for (const auto& [channel, score] : scores) os << channel << "," << fixed6(score) << "\n";
}

inline void write_incremental_csv(std::ostream& os, const ChannelScores& scores, double total) {
    os << "channel,score\n";
    for (const auto& [channel, score] : scores) os << channel << "," << fixed6(score) << "\n";
    os << "total," << fixed6(total) << "\n";
}

inline void write_heatmap_csv(std::ostream& os, const TouchpointPath& path,
                              const Vocabulary& vocab, const Heatmap& hm) {
    os << "t,touchpoint,weight,p\n";
    for (std::size_t t = 0; t < path.events.size(); ++t)
        os << t << "," << vocab.name(path.events[t]) << "," << fixed6(hm.weights[t]) << ","
           << fixed6(hm.probability) << "\n";
}

inline void write_lag_curves_csv(std::ostream& os, const std::vector<LagCurvePoint>& points) {
    os << "touchpoint,bucket,mean,std,n\n";
    for (const auto& p : points)
        os << p.touchpoint << "," << p.bucket << "," << fixed6(p.mean) << "," << fixed6(p.stddev)
           << "," << p.n << "\n";
}

inline void write_densities_csv(std::ostream& os, const std::vector<DensitySample>& samples) {
    os << "window,channel,score\n";
    for (const auto& s : samples)
        os << s.window << "," << s.channel << "," << fixed6(s.score) << "\n";
}

} // namespace mta
