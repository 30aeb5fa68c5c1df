#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mta/errors.hpp"

namespace mta {

// One customer journey: ordered touchpoint events with their occurrence
// times (days), the lag from each event to the path end (days), static
// control covariates, and the conversion label.
struct TouchpointPath {
    std::string id;
    std::vector<std::uint32_t> events; // touchpoint indices, ascending occurrence time
    std::vector<double> time_lags;     // end_time - occurrence, days, non-increasing
    std::vector<double> occurrence_times;
    double end_time{0.0};
    std::vector<double> controls;
    bool converted{false};

    std::size_t length() const { return events.size(); }

    void validate(std::size_t vocab_size) const {
        if (events.empty()) throw DataError("path " + id + ": empty event list");
        if (events.size() != time_lags.size() || events.size() != occurrence_times.size())
            throw DataError("path " + id + ": event/lag/time length mismatch");
        for (std::size_t t = 0; t < events.size(); ++t) {
            if (events[t] >= vocab_size)
                throw DataError("path " + id + ": touchpoint index out of range");
            if (time_lags[t] < 0.0) throw DataError("path " + id + ": negative time lag");
            if (t > 0 && time_lags[t] > time_lags[t - 1])
                throw DataError("path " + id + ": events not ordered by occurrence time");
        }
    }
};

struct DatasetSplit {
    std::vector<TouchpointPath> train;
    std::vector<TouchpointPath> validation;
    std::vector<TouchpointPath> test;
    std::uint64_t seed{0};
};

} // namespace mta
