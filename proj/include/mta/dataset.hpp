#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mta/errors.hpp"
#include "mta/path.hpp"
#include "mta/rng.hpp"
#include "mta/tensor.hpp"
#include "mta/vocab.hpp"

namespace mta {

struct IngestResult {
    std::vector<TouchpointPath> paths;
    std::vector<std::string> control_schema; // field order for the controls vector
    std::size_t rejected_empty{0};           // records skipped for having no events
};

// Line-delimited records:
// {"path_id": str, "events": [{"tp": str, "t": days}], "end_t": days,
//  "controls": {name: number, ...}, "converted": bool}
// Events are sorted by occurrence time; lags are end_t - t in fractional
// days. The control schema is the sorted key set of the first record unless
// one is supplied.
inline IngestResult ingest_jsonl(std::istream& in, const Vocabulary& vocab,
                                 const std::vector<std::string>* schema = nullptr) {
    IngestResult result;
    if (schema) result.control_schema = *schema;
    bool schema_fixed = schema != nullptr;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no);

        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": invalid JSON: " + e.what());
        }

        try {
            TouchpointPath path;
            path.id = j.at("path_id").get<std::string>();
            path.end_time = j.at("end_t").get<double>();
            path.converted = j.at("converted").get<bool>();

            const auto& events = j.at("events");
            if (!events.is_array()) throw DataError(where + ": events must be an array");
            if (events.empty()) {
                ++result.rejected_empty;
                continue;
            }

            std::vector<std::pair<double, std::string>> timed;
            timed.reserve(events.size());
            for (const auto& ev : events)
                timed.emplace_back(ev.at("t").get<double>(), ev.at("tp").get<std::string>());
            std::stable_sort(timed.begin(), timed.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });

            for (const auto& [t, tp] : timed) {
                if (!vocab.contains(tp)) throw DataError(where + ": unknown touchpoint: " + tp);
                if (t > path.end_time)
                    throw DataError(where + ": event occurs after path end");
                path.events.push_back(static_cast<std::uint32_t>(vocab.index_of(tp)));
                path.occurrence_times.push_back(t);
                path.time_lags.push_back(path.end_time - t);
            }

            const auto controls = j.value("controls", nlohmann::json::object());
            if (!schema_fixed) {
                for (const auto& item : controls.items())
                    result.control_schema.push_back(item.key());
                std::sort(result.control_schema.begin(), result.control_schema.end());
                schema_fixed = true;
            }
            for (const auto& key : result.control_schema) {
                if (!controls.contains(key))
                    throw DataError(where + ": missing control field: " + key);
                path.controls.push_back(controls.at(key).get<double>());
            }

            path.validate(vocab.size());
            result.paths.push_back(std::move(path));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return result;
}

inline void export_jsonl(std::ostream& out, const std::vector<TouchpointPath>& paths,
                         const Vocabulary& vocab, const std::vector<std::string>& schema) {
    for (const auto& p : paths) {
        nlohmann::ordered_json j;
        j["path_id"] = p.id;
        auto events = nlohmann::ordered_json::array();
        for (std::size_t t = 0; t < p.length(); ++t)
            events.push_back({{"tp", vocab.name(p.events[t])}, {"t", p.occurrence_times[t]}});
        j["events"] = std::move(events);
        j["end_t"] = p.end_time;
        auto controls = nlohmann::ordered_json::object();
        for (std::size_t c = 0; c < schema.size(); ++c) controls[schema[c]] = p.controls.at(c);
        j["controls"] = std::move(controls);
        j["converted"] = p.converted;
        out << j.dump() << "\n";
    }
}

// Drops an event when a kept event with the same touchpoint occurred less
// than `window_hours` before it. Window 0 keeps everything.
inline TouchpointPath dedup_visits(const TouchpointPath& path, double window_hours) {
    if (window_hours < 0.0) throw std::domain_error("dedup window must be non-negative");
    const double window_days = window_hours / 24.0;
    TouchpointPath out;
    out.id = path.id;
    out.end_time = path.end_time;
    out.controls = path.controls;
    out.converted = path.converted;
    if (path.events.empty()) return out;
    std::vector<double> last_kept(*std::max_element(path.events.begin(), path.events.end()) + 1,
                                  -std::numeric_limits<double>::infinity());
    for (std::size_t t = 0; t < path.length(); ++t) {
        const double when = path.occurrence_times[t];
        if (when - last_kept[path.events[t]] < window_days) continue;
        last_kept[path.events[t]] = when;
        out.events.push_back(path.events[t]);
        out.occurrence_times.push_back(when);
        out.time_lags.push_back(path.time_lags[t]);
    }
    return out;
}

// Keeps every positive path and a seed-deterministic sample of negatives of
// size floor(ratio * positives), capped at the available negatives. Relative
// path order is preserved.
inline std::vector<TouchpointPath> downsample_negatives(const std::vector<TouchpointPath>& paths,
                                                        double target_ratio, std::uint64_t seed) {
    if (target_ratio <= 0.0) throw std::domain_error("downsample ratio must be positive");
    std::vector<std::size_t> negatives;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        if (paths[i].converted)
            ++n_pos;
        else
            negatives.push_back(i);
    }
    if (n_pos == 0) throw std::domain_error("downsample: no positive paths");

    const std::size_t want = std::min<std::size_t>(
        negatives.size(), static_cast<std::size_t>(std::floor(target_ratio * double(n_pos))));
    Rng rng(derive_seed(seed, 0xD05A));
    rng.shuffle(negatives);
    negatives.resize(want);
    std::sort(negatives.begin(), negatives.end());

    std::vector<TouchpointPath> out;
    out.reserve(n_pos + want);
    std::size_t next_neg = 0;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        if (paths[i].converted) {
            out.push_back(paths[i]);
        } else if (next_neg < negatives.size() && negatives[next_neg] == i) {
            out.push_back(paths[i]);
            ++next_neg;
        }
    }
    return out;
}

// Label-stratified split. Paths are canonically sorted by id first, so the
// outcome depends only on (contents, fractions, seed), not input order.
inline DatasetSplit split_dataset(std::vector<TouchpointPath> paths, double train_frac,
                                  double valid_frac, double test_frac, std::uint64_t seed) {
    if (train_frac <= 0.0 || valid_frac < 0.0 || test_frac < 0.0)
        throw std::domain_error("split fractions must be positive");
    if (std::fabs(train_frac + valid_frac + test_frac - 1.0) > 1e-9)
        throw std::domain_error("split fractions must sum to 1");

    std::stable_sort(paths.begin(), paths.end(),
                     [](const TouchpointPath& a, const TouchpointPath& b) { return a.id < b.id; });

    DatasetSplit split;
    split.seed = seed;
    for (int label = 0; label < 2; ++label) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < paths.size(); ++i)
            if (paths[i].converted == (label == 1)) idx.push_back(i);
        Rng rng(derive_seed(seed, 0x5B17 + static_cast<std::uint64_t>(label)));
        rng.shuffle(idx);
        const auto n = static_cast<double>(idx.size());
        const auto cut1 = static_cast<std::size_t>(std::llround(train_frac * n));
        const auto cut2 = static_cast<std::size_t>(std::llround((train_frac + valid_frac) * n));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto& dest = k < cut1 ? split.train : (k < cut2 ? split.validation : split.test);
            dest.push_back(paths[idx[k]]);
        }
    }
    return split;
}

inline Tensor one_hot(std::size_t index, std::size_t vocab_size) {
    if (index >= vocab_size) throw std::domain_error("one_hot index out of range");
    Tensor t({vocab_size});
    t[index] = 1.0;
    return t;
}

} // namespace mta
