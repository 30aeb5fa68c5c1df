#pragma once

#include <stdexcept>
#include <string>

namespace mta {

// Shape disagreement between tensor operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid model or run configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (ingestion, vocab lookups).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Model file could not be read or does not match its declared config.
struct ModelIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace mta
